//! Binary checkpoint format.
//!
//! ```text
//! [8 bytes]  magic "ADDUNET1"
//! [8 bytes]  header length N, little-endian u64
//! [N bytes]  UTF-8 JSON header
//! [...]      tensor payloads, little-endian f64, in manifest order
//! ```
//!
//! The header records the model config, the number of completed training
//! steps, optional Adam hyper-parameters and a manifest of
//! `{name, shape, offset}` entries. Offsets are in bytes from the start of
//! the payload section. Adam moments are stored as `adam.m.<param>` and
//! `adam.v.<param>` entries after the parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ParamSet};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADDUNET1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    step_count: u64,
    #[serde(flatten)]
    config: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    step: u64,
    optimizer: Option<OptimizerHeader>,
    tensors: Vec<TensorEntry>,
}

/// A model plus optional optimizer state and training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<Adam>,
    /// Completed training steps.
    pub step: u64,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            optimizer: None,
            step: 0,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Tensor)> = self
            .model
            .params()
            .iter()
            .map(|(n, t)| (n.clone(), t))
            .collect();
        if let Some(adam) = &self.optimizer {
            let names: Vec<&String> = self.model.params().iter().map(|(n, _)| n).collect();
            for (n, m) in names.iter().zip(adam.first_moments()) {
                tensors.push((format!("adam.m.{n}"), m));
            }
            for (n, v) in names.iter().zip(adam.second_moments()) {
                tensors.push((format!("adam.v.{n}"), v));
            }
        }

        let mut offset = 0u64;
        let entries = tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.numel() as u64;
                e
            })
            .collect();
        let header = Header {
            model: self.model.config().clone(),
            step: self.step,
            optimizer: self.optimizer.as_ref().map(|a| OptimizerHeader {
                step_count: a.step_count(),
                config: a.config,
            }),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;

        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Format("checkpoint is truncated".into());
        if bytes.len() < 16 {
            return Err(truncated());
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize.checked_add(header_len).ok_or_else(truncated)?;
        let header_bytes = bytes.get(16..header_end).ok_or_else(truncated)?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        let payload = &bytes[header_end..];

        let read = |entry: &TensorEntry| -> Result<Tensor> {
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let raw = payload
                .get(start..start + 8 * n)
                .ok_or_else(|| Error::Format(format!("payload for `{}` is truncated", entry.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::new(entry.shape.clone(), data)
        };

        let mut params = ParamSet::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for entry in &header.tensors {
            let t = read(entry)?;
            if entry.name.starts_with("adam.m.") {
                m.push(t);
            } else if entry.name.starts_with("adam.v.") {
                v.push(t);
            } else {
                params.push(entry.name.clone(), t);
            }
        }
        let model = Model::from_params(header.model, params)?;
        let optimizer = match header.optimizer {
            Some(o) => Some(Adam::from_state(o.config, o.step_count, m, v, model.params())?),
            None => None,
        };
        Ok(Self {
            model,
            optimizer,
            step: header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
