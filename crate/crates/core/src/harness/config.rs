use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dir, synth_collection, synth_image, GrayImage, SynthKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Where images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Flat directory of PNG/PGM files, read in file-name order.
    Dir(PathBuf),
    /// Procedurally generated square images. Without `pattern` the set cycles
    /// through every kind; with it, all images use that one kind.
    Synth {
        count: usize,
        size: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pattern: Option<SynthKind>,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<(String, GrayImage)>> {
        match self {
            DataSource::Dir(path) => load_dir(path),
            DataSource::Synth { count: 0, .. } => Err(Error::Config("synthetic data needs count >= 1".into())),
            DataSource::Synth {
                count,
                size,
                seed,
                pattern: None,
            } => synth_collection(*count, *size, *seed),
            DataSource::Synth {
                count,
                size,
                seed,
                pattern: Some(kind),
            } => (0..*count)
                .map(|i| {
                    let img = synth_image(*kind, *size, *size, crate::seed::derive(*seed, i as u64))?;
                    Ok((format!("synth{i:03}"), img))
                })
                .collect(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match self {
            DataSource::Dir(p) if !p.is_dir() => Err(Error::Config(format!(
                "{what} directory {} does not exist",
                p.display()
            ))),
            DataSource::Synth { count: 0, .. } => Err(Error::Config(format!("{what}: synth count must be >= 1"))),
            DataSource::Synth { size, .. } if *size < 16 => {
                Err(Error::Config(format!("{what}: synth size must be >= 16")))
            }
            _ => Ok(()),
        }
    }
}

fn default_realizations() -> usize {
    2
}

fn default_true() -> bool {
    true
}

fn default_eps() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total optimizer steps. Exactly one of `steps` and `epochs` must be set.
    #[serde(default)]
    pub steps: Option<u64>,
    /// One epoch is one pass over `patches` fresh random crops.
    #[serde(default)]
    pub epochs: Option<u64>,
    pub batch_size: usize,
    pub lr: f64,
    /// Training noise level on the 0-255 scale; one level per run.
    pub sigma: f64,
    pub patch_size: usize,
    /// Crops per epoch.
    pub patches: usize,
    /// Independent noise draws per crop (`K`).
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    pub seed: u64,
    /// Draw fresh noise every step. When false the same noise field is reused.
    #[serde(default = "default_true")]
    pub resample_noise: bool,
    #[serde(default = "default_eps")]
    pub charbonnier_eps: f64,
    pub data: DataSource,
}

impl TrainConfig {
    pub fn batches_per_epoch(&self) -> u64 {
        self.patches.div_ceil(self.batch_size) as u64
    }

    pub fn total_steps(&self) -> u64 {
        match (self.steps, self.epochs) {
            (Some(s), _) => s,
            (None, Some(e)) => e * self.batches_per_epoch(),
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub data: DataSource,
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Write clipped denoised images next to the CSVs.
    #[serde(default)]
    pub write_images: bool,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::Config("eval.sigmas must not be empty".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::Config(format!("eval sigma {s} must be >= 0")));
        }
        self.data.validate("eval data")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    pub output_dir: PathBuf,
}

pub const PRESET_NAMES: [&str; 3] = ["preset-overfit", "preset-smoke", "preset-paper"];

impl RunConfig {
    /// One of the bundled presets (see [`PRESET_NAMES`]).
    pub fn preset(name: &str) -> Result<Self> {
        let json = match name {
            "preset-overfit" | "overfit" => include_str!("../../presets/overfit.json"),
            "preset-smoke" | "smoke" => include_str!("../../presets/smoke.json"),
            "preset-paper" | "paper" => include_str!("../../presets/paper.json"),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (available: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::from_json(json)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field before any work starts. Data directories must exist.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if t.steps.is_some() == t.epochs.is_some() {
            return Err(Error::Config("set exactly one of train.steps and train.epochs".into()));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", t.lr)));
        }
        if !(t.sigma > 0.0 && t.sigma.is_finite()) {
            return Err(Error::Config(format!("train.sigma must be positive, got {}", t.sigma)));
        }
        if t.patch_size < self.model.max_kernel() {
            return Err(Error::Config(format!(
                "train.patch_size {} is smaller than the largest kernel {}",
                t.patch_size,
                self.model.max_kernel()
            )));
        }
        if t.patches == 0 || t.realizations == 0 {
            return Err(Error::Config("train.patches and train.realizations must be >= 1".into()));
        }
        if !(t.charbonnier_eps > 0.0) {
            return Err(Error::Config("train.charbonnier_eps must be positive".into()));
        }
        if let DataSource::Synth { size, .. } = t.data {
            if size < t.patch_size {
                return Err(Error::Config(format!(
                    "synthetic images ({size}px) are smaller than the patch size ({})",
                    t.patch_size
                )));
            }
        }
        t.data.validate("train data")?;
        if let Some(e) = &self.eval {
            e.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = RunConfig::preset(name).unwrap();
            if name != "preset-paper" {
                cfg.validate().unwrap();
            }
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn paper_preset_values() {
        let cfg = RunConfig::preset("preset-paper").unwrap();
        assert_eq!(cfg.model.depth, 5);
        assert_eq!(cfg.model.channels, 64);
        assert_eq!(cfg.model.kernel_schedule, vec![3, 3, 3, 3, 3]);
        assert_eq!(cfg.train.lr, 2e-4);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.train.epochs, Some(200));
        assert_eq!(cfg.train.patch_size, 128);
        assert_eq!(cfg.train.charbonnier_eps, 1e-3);
        assert_eq!(cfg.eval.unwrap().sigmas, vec![15.0, 25.0, 50.0]);
    }

    #[test]
    fn validation_catches_bad_fields() {
        let base = RunConfig::preset("preset-overfit").unwrap();
        let mut c = base.clone();
        c.train.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.train.epochs = Some(3);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.train.data = DataSource::Dir("/definitely/not/here".into());
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.train.sigma = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.eval = Some(EvalConfig {
            data: DataSource::Synth {
                count: 1,
                size: 32,
                seed: 0,
                pattern: None,
            },
            sigmas: vec![],
            seed: 0,
            write_images: false,
        });
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::preset("preset-smoke").unwrap().to_json()).unwrap();
        v["train"]["learning_rate"] = 1.0.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn epoch_arithmetic() {
        let mut t = RunConfig::preset("preset-smoke").unwrap().train;
        t.steps = None;
        t.epochs = Some(3);
        t.patches = 10;
        t.batch_size = 4;
        assert_eq!(t.batches_per_epoch(), 3);
        assert_eq!(t.total_steps(), 9);
    }
}
