//! Interpretability tools: skip-gate sweeps and filter frequency analysis.

mod spectra;
mod sweep;

pub use spectra::{
    dft2d, filter_spectra, spectral_centroid, ChannelReduction, FilterSpectrum, RadialBin, Spectrum,
    SpectrumProfile, DEFAULT_PAD_TO, DEFAULT_TOP_K,
};
pub use sweep::{linspace, sweep_gate, SweepResult};
