use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};
use crate::seed;

/// Procedural test images, so that training and evaluation never need a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// `(r/(h-1) + c/(w-1)) / 2`.
    Gradient,
    /// Two-level checkerboard with the given spatial period (two cells).
    Checkers { period: usize },
    /// Sum of random Gaussian bumps, rescaled into `[0.05, 0.95]`.
    GaussianBlobs { count: usize },
    /// Vertical cosine stripes at `frequency` cycles per pixel.
    Stripes { frequency: f64 },
}

pub const CHECKER_LOW: f64 = 0.2;
pub const CHECKER_HIGH: f64 = 0.8;

pub fn synth_image(kind: SynthKind, height: usize, width: usize, seed: u64) -> Result<GrayImage> {
    if height < 16 || width < 16 {
        return Err(Error::InvalidArgument(format!(
            "synthetic images must be at least 16x16, got {height}x{width}"
        )));
    }
    let mut pixels = Vec::with_capacity(height * width);
    match kind {
        SynthKind::Gradient => {
            let (hs, ws) = ((height - 1) as f64, (width - 1) as f64);
            for r in 0..height {
                for c in 0..width {
                    pixels.push((r as f64 / hs + c as f64 / ws) / 2.0);
                }
            }
        }
        SynthKind::Checkers { period } => {
            if period < 2 {
                return Err(Error::InvalidArgument("checker period must be at least 2".into()));
            }
            let cell = period / 2;
            for r in 0..height {
                for c in 0..width {
                    let odd = (r / cell + c / cell) % 2 == 1;
                    pixels.push(if odd { CHECKER_HIGH } else { CHECKER_LOW });
                }
            }
        }
        SynthKind::GaussianBlobs { count } => {
            let mut rng = seed::rng(seed);
            let scale = height.min(width) as f64;
            let blobs: Vec<(f64, f64, f64, f64)> = (0..count.max(1))
                .map(|_| {
                    (
                        rng.random_range(0.0..height as f64),
                        rng.random_range(0.0..width as f64),
                        rng.random_range(scale / 16.0..scale / 4.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            for r in 0..height {
                for c in 0..width {
                    let v: f64 = blobs
                        .iter()
                        .map(|&(br, bc, s, a)| {
                            let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                            a * (-d2 / (2.0 * s * s)).exp()
                        })
                        .sum();
                    pixels.push(v);
                }
            }
            let (lo, hi) = pixels
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            let span = if hi > lo { hi - lo } else { 1.0 };
            for p in &mut pixels {
                *p = 0.05 + 0.9 * (*p - lo) / span;
            }
        }
        SynthKind::Stripes { frequency } => {
            if !(0.0..=0.5).contains(&frequency) {
                return Err(Error::InvalidArgument(format!(
                    "stripe frequency must be in [0, 0.5] cycles/pixel, got {frequency}"
                )));
            }
            for _ in 0..height {
                for c in 0..width {
                    pixels.push(0.5 + 0.4 * (TAU * frequency * c as f64).cos());
                }
            }
        }
    }
    GrayImage::from_clipped(height, width, pixels)
}

/// A varied set of `count` synthetic images cycling through every kind with
/// seeded parameters.
pub fn synth_collection(count: usize, size: usize, seed: u64) -> Result<Vec<(String, GrayImage)>> {
    (0..count)
        .map(|i| {
            let s = seed::derive(seed, i as u64);
            let mut rng = seed::rng(s);
            let kind = match i % 4 {
                0 => SynthKind::GaussianBlobs {
                    count: rng.random_range(3..9),
                },
                1 => SynthKind::Checkers {
                    period: [4, 6, 8, 12, 16][rng.random_range(0..5)],
                },
                2 => SynthKind::Stripes {
                    frequency: rng.random_range(0.02..0.2),
                },
                _ => SynthKind::Gradient,
            };
            let name = match kind {
                SynthKind::Gradient => "gradient",
                SynthKind::Checkers { .. } => "checkers",
                SynthKind::GaussianBlobs { .. } => "blobs",
                SynthKind::Stripes { .. } => "stripes",
            };
            synth_image(kind, size, size, s).map(|img| (format!("synth{i:03}_{name}"), img))
        })
        .collect()
}
