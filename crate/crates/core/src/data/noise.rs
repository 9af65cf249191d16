use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Clean/noisy pairs ready for a training step.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    /// `[B*K, 1, P, P]`, each clean patch repeated `K` times.
    pub clean: Tensor,
    /// `clean + n`, `n ~ N(0, (sigma_255/255)^2)`, not clipped.
    pub noisy: Tensor,
    pub sigma_255: f64,
    pub seed: u64,
}

/// `n` independent standard normal draws (Box-Muller on a seeded ChaCha8 stream).
pub fn standard_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        // u1 in (0, 1] keeps the log finite
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let radius = (-2.0 * u1.ln()).sqrt();
        out.push(radius * (TAU * u2).cos());
        out.push(radius * (TAU * u2).sin());
    }
    out.truncate(n);
    out
}

/// Additive white Gaussian noise with standard deviation `sigma_255 / 255`.
pub fn awgn(n: usize, sigma_255: f64, seed: u64) -> Result<Vec<f64>> {
    check_sigma(sigma_255)?;
    let std = sigma_255 / 255.0;
    Ok(standard_normal(n, seed).into_iter().map(|z| z * std).collect())
}

fn check_sigma(sigma_255: f64) -> Result<()> {
    if sigma_255 > 0.0 && sigma_255.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("noise sigma must be positive, got {sigma_255}")))
    }
}

/// Adds noise to a copy of `clean`.
pub fn add_noise(clean: &Tensor, sigma_255: f64, seed: u64) -> Result<Tensor> {
    let noise = awgn(clean.numel(), sigma_255, seed)?;
    let data = clean.data().iter().zip(noise).map(|(c, n)| c + n).collect();
    Tensor::new(clean.shape().to_vec(), data)
}

/// Builds `K` independent noisy realizations of every patch in `clean` (`[B,1,P,P]`).
///
/// Sample `b * K + k` holds realization `k` of patch `b`; the whole noise
/// field is drawn from one stream keyed by `seed`.
pub fn corrupt(clean: &Tensor, sigma_255: f64, realizations: usize, seed: u64) -> Result<PatchBatch> {
    check_sigma(sigma_255)?;
    if realizations == 0 {
        return Err(Error::InvalidArgument("need at least one noise realization".into()));
    }
    let [b, c, h, w] = clean.dims4()?;
    let plane = c * h * w;
    let mut repeated = Vec::with_capacity(b * realizations * plane);
    for patch in clean.data().chunks_exact(plane.max(1)) {
        for _ in 0..realizations {
            repeated.extend_from_slice(patch);
        }
    }
    let clean = Tensor::new([b * realizations, c, h, w], repeated)?;
    let noisy = add_noise(&clean, sigma_255, seed)?;
    Ok(PatchBatch {
        clean,
        noisy,
        sigma_255,
        seed,
    })
}
