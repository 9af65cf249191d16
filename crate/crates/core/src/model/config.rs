use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Subtractive encoder with softplus-gated additive skips.
    RealAdditive,
    /// Plain encoder whose activations are added into the decoder with unit weight.
    PseudoAdditive,
    #[serde(rename = "DnCNN")]
    DnCnn,
}

impl Variant {
    pub fn short_name(self) -> &'static str {
        match self {
            Variant::RealAdditive => "R-AddU",
            Variant::PseudoAdditive => "P-AddU",
            Variant::DnCnn => "DnCNN",
        }
    }

    pub fn is_unet(self) -> bool {
        !matches!(self, Variant::DnCnn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of encoder (and decoder) blocks; for DnCNN, the number of conv layers.
    pub depth: usize,
    pub channels: usize,
    /// Per-encoder-block kernel sizes. Ignored by DnCNN, which uses 3x3 throughout.
    #[serde(default)]
    pub kernel_schedule: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn real_additive(channels: usize, kernel_schedule: &[usize], seed: u64) -> Self {
        Self {
            variant: Variant::RealAdditive,
            depth: kernel_schedule.len(),
            channels,
            kernel_schedule: kernel_schedule.to_vec(),
            seed,
        }
    }

    pub fn pseudo_additive(channels: usize, kernel_schedule: &[usize], seed: u64) -> Self {
        Self {
            variant: Variant::PseudoAdditive,
            ..Self::real_additive(channels, kernel_schedule, seed)
        }
    }

    /// The standard 17-layer, 64-channel DnCNN.
    pub fn dncnn(seed: u64) -> Self {
        Self {
            variant: Variant::DnCnn,
            depth: 17,
            channels: 64,
            kernel_schedule: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        match self.variant {
            Variant::RealAdditive | Variant::PseudoAdditive => {
                if self.depth == 0 {
                    return Err(Error::Config("depth must be positive".into()));
                }
                if self.kernel_schedule.len() != self.depth {
                    return Err(Error::Config(format!(
                        "kernel schedule {:?} has {} entries but depth is {}",
                        self.kernel_schedule,
                        self.kernel_schedule.len(),
                        self.depth
                    )));
                }
                if let Some(k) = self.kernel_schedule.iter().find(|k| **k == 0 || **k % 2 == 0) {
                    return Err(Error::Config(format!(
                        "kernel sizes must be odd and at least 1, got {k}"
                    )));
                }
            }
            Variant::DnCnn => {
                if self.depth < 2 {
                    return Err(Error::Config("DnCNN needs at least 2 layers".into()));
                }
            }
        }
        Ok(())
    }

    /// Largest kernel used anywhere in the network.
    pub fn max_kernel(&self) -> usize {
        match self.variant {
            Variant::DnCnn => 3,
            _ => self.kernel_schedule.iter().copied().max().unwrap_or(1).max(3),
        }
    }

    /// Label in the style `R-AddU (5, 3-3-3-3-3)` or `DnCNN (17)`.
    pub fn model_id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            Variant::DnCnn => write!(f, "DnCNN ({})", self.depth),
            v => {
                let ks: Vec<String> = self.kernel_schedule.iter().map(|k| k.to_string()).collect();
                write!(f, "{} ({}, {})", v.short_name(), self.depth, ks.join("-"))
            }
        }
    }
}
