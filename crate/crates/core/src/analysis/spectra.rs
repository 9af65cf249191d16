use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::GrayImage;
use crate::error::{Error, Result};
use crate::model::Model;

/// Unnormalised 2-D DFT of a row-major `rows x cols` real array.
pub fn dft2d(data: &[f64], rows: usize, cols: usize) -> Result<Vec<Complex64>> {
    if data.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::Shape(format!(
            "dft2d: {} values for a {rows}x{cols} grid",
            data.len()
        )));
    }
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(cols);
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
    Ok(buf)
}

/// DC-centred magnitude spectrum on an `size x size` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub size: usize,
    /// Row-major magnitudes; the DC term sits at `(size/2, size/2)`.
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    /// Zero-pads `data` (`rows x cols`, placed at the origin) to `pad_to x pad_to`.
    pub fn of(data: &[f64], rows: usize, cols: usize, pad_to: usize) -> Result<Self> {
        if rows > pad_to || cols > pad_to {
            return Err(Error::InvalidArgument(format!(
                "cannot pad a {rows}x{cols} array to {pad_to}x{pad_to}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape("spectrum input does not match its size".into()));
        }
        let mut padded = vec![0.0; pad_to * pad_to];
        for r in 0..rows {
            padded[r * pad_to..r * pad_to + cols].copy_from_slice(&data[r * cols..(r + 1) * cols]);
        }
        let freq = dft2d(&padded, pad_to, pad_to)?;
        let half = pad_to / 2;
        let mut magnitude = vec![0.0; pad_to * pad_to];
        for r in 0..pad_to {
            for c in 0..pad_to {
                let (sr, sc) = ((r + half) % pad_to, (c + half) % pad_to);
                magnitude[sr * pad_to + sc] = freq[r * pad_to + c].norm();
            }
        }
        Ok(Self {
            size: pad_to,
            magnitude,
        })
    }

    /// Spectrum of a square image, optionally with its mean removed.
    pub fn of_image(img: &GrayImage, remove_mean: bool) -> Result<Self> {
        if img.height() != img.width() {
            return Err(Error::Shape("image spectra need square images".into()));
        }
        let mean = if remove_mean {
            img.pixels().iter().sum::<f64>() / img.pixels().len() as f64
        } else {
            0.0
        };
        let data: Vec<f64> = img.pixels().iter().map(|p| p - mean).collect();
        Self::of(&data, img.height(), img.width(), img.height())
    }

    pub fn energy(&self) -> f64 {
        self.magnitude.iter().map(|m| m * m).sum()
    }

    /// Annulus index of a centred grid position: rounded distance from DC,
    /// with corner frequencies beyond Nyquist folded into the last annulus.
    pub fn bin_of(&self, row: usize, col: usize) -> usize {
        let half = (self.size / 2) as f64;
        let (dy, dx) = (row as f64 - half, col as f64 - half);
        ((dy * dy + dx * dx).sqrt().round() as usize).min(self.size / 2)
    }

    pub fn radial_profile(&self) -> Vec<RadialBin> {
        let bins = self.size / 2 + 1;
        let mut sum = vec![0.0; bins];
        let mut count = vec![0usize; bins];
        for r in 0..self.size {
            for c in 0..self.size {
                let b = self.bin_of(r, c);
                sum[b] += self.magnitude[r * self.size + c];
                count[b] += 1;
            }
        }
        (0..bins)
            .map(|b| RadialBin {
                frequency: b as f64 / self.size as f64,
                mean_magnitude: if count[b] > 0 { sum[b] / count[b] as f64 } else { 0.0 },
                count: count[b],
            })
            .collect()
    }

    /// Log-scaled magnitudes stretched to `[0, 1]` for viewing.
    pub fn to_image(&self) -> Result<GrayImage> {
        let logs: Vec<f64> = self.magnitude.iter().map(|m| m.ln_1p()).collect();
        let max = logs.iter().cloned().fold(0.0, f64::max);
        let pixels = logs.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect();
        GrayImage::from_clipped(self.size, self.size, pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    /// Cycles per pixel, `r / size` for annulus `r`.
    pub frequency: f64,
    pub mean_magnitude: f64,
    /// Number of spectrum entries in the annulus.
    pub count: usize,
}

/// Magnitude-weighted mean radial frequency, in cycles per pixel.
pub fn spectral_centroid(profile: &[RadialBin]) -> Result<f64> {
    let (num, den) = profile.iter().fold((0.0, 0.0), |(n, d), b| {
        let w = b.mean_magnitude * b.count as f64;
        (n + b.frequency * w, d + w)
    });
    if den <= 0.0 {
        return Err(Error::InvalidArgument("spectral centroid of an all-zero profile".into()));
    }
    Ok(num / den)
}

/// How a multi-input-channel filter is turned into 2-D kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduction {
    /// One kernel per output channel, summed over input channels.
    #[default]
    Sum,
    /// One kernel per (output, input) channel pair.
    PerChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpectrum {
    /// `"co"` for summed filters, `"co.ci"` per channel.
    pub filter_id: String,
    pub energy: f64,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub layer: String,
    pub pad_to: usize,
    pub reduction: ChannelReduction,
    /// Per-annulus magnitude averaged over all filters of the layer.
    pub radial: Vec<RadialBin>,
    /// Highest-energy filters, strongest first.
    pub topk: Vec<FilterSpectrum>,
}

pub const DEFAULT_PAD_TO: usize = 64;
pub const DEFAULT_TOP_K: usize = 6;

/// Spectra of the filters of conv layer `layer` (e.g. `enc.0.conv1`).
pub fn filter_spectra(
    model: &Model,
    layer: &str,
    pad_to: usize,
    top_k: usize,
    reduction: ChannelReduction,
) -> Result<SpectrumProfile> {
    let weight = model
        .params()
        .get(&format!("{layer}.weight"))
        .filter(|w| w.shape().len() == 4)
        .ok_or_else(|| Error::InvalidArgument(format!("`{layer}` is not a convolution layer")))?;
    let [cout, cin, k, _] = weight.dims4()?;
    if pad_to < 4 * k {
        return Err(Error::InvalidArgument(format!(
            "pad_to must be at least 4x the kernel size ({}), got {pad_to}",
            4 * k
        )));
    }
    let taps = k * k;
    let mut kernels: Vec<(String, Vec<f64>)> = Vec::new();
    for co in 0..cout {
        let block = &weight.data()[co * cin * taps..(co + 1) * cin * taps];
        match reduction {
            ChannelReduction::Sum => {
                let mut summed = vec![0.0; taps];
                for ch in block.chunks_exact(taps) {
                    summed.iter_mut().zip(ch).for_each(|(s, v)| *s += v);
                }
                kernels.push((co.to_string(), summed));
            }
            ChannelReduction::PerChannel => {
                for (ci, ch) in block.chunks_exact(taps).enumerate() {
                    kernels.push((format!("{co}.{ci}"), ch.to_vec()));
                }
            }
        }
    }

    let mut spectra = kernels
        .into_iter()
        .map(|(id, kern)| {
            let spectrum = Spectrum::of(&kern, k, k, pad_to)?;
            Ok(FilterSpectrum {
                filter_id: id,
                energy: spectrum.energy(),
                spectrum,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let profiles: Vec<Vec<RadialBin>> = spectra.iter().map(|s| s.spectrum.radial_profile()).collect();
    let mut radial = profiles[0].clone();
    for (b, bin) in radial.iter_mut().enumerate() {
        bin.mean_magnitude = profiles.iter().map(|p| p[b].mean_magnitude).sum::<f64>() / profiles.len() as f64;
    }

    // stable sort keeps filter order among equal energies
    spectra.sort_by(|a, b| b.energy.total_cmp(&a.energy));
    spectra.truncate(top_k);
    Ok(SpectrumProfile {
        layer: layer.to_string(),
        pad_to,
        reduction,
        radial,
        topk: spectra,
    })
}
