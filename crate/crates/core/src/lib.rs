//! Additive U-Net denoising kit.
//!
//! The crate bundles everything needed to train and study small
//! convolutional denoisers on grayscale images:
//!
//! - [`tensor`]: `f64` tensors with reverse-mode differentiation,
//! - [`model`]: the additive U-Net, a pseudo-additive baseline and DnCNN,
//! - [`optim`]: Adam,
//! - [`data`]: image IO, random crops, Gaussian corruption, synthetic images,
//! - [`metrics`]: PSNR and SSIM with CSV reports,
//! - [`analysis`]: skip-gate sweeps and filter spectra,
//! - [`harness`]: configs, training and evaluation runs used by the CLI.
//!
//! A guide with worked examples lives in the `book/` directory of the repository.

pub mod analysis;
pub mod data;
mod eval;
mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seed;
pub mod tensor;

pub use error::{Error, ErrorCategory, Result};
pub use eval::{Denoised, EvalSet};
pub use tensor::{Tensor, Tape, Var};
