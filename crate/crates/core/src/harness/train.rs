use rand::seq::SliceRandom;

use super::config::TrainConfig;
use crate::data::{corrupt, patch_corners, GrayImage};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ForwardOptions, Model, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::seed;
use crate::tensor::{Tape, Tensor};

const TAG_CROP: u64 = 0x6372_6f70;
const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_NOISE: u64 = 0x6e6f_6973;

/// Deterministic per-step batches.
///
/// Epoch `e` draws `patches` fresh crops (crop `p` comes from image
/// `p mod n`) and visits them in a seeded order. Everything is a function
/// of `(seed, epoch, step)`, so a resumed run sees exactly the batches an
/// uninterrupted run would.
pub struct BatchStream<'a> {
    cfg: &'a TrainConfig,
    images: &'a [(String, GrayImage)],
    cached: Option<(u64, Vec<GrayImage>, Vec<usize>)>,
}

impl<'a> BatchStream<'a> {
    pub fn new(cfg: &'a TrainConfig, images: &'a [(String, GrayImage)]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("training data is empty".into()));
        }
        if let Some((id, img)) = images
            .iter()
            .find(|(_, img)| img.height() < cfg.patch_size || img.width() < cfg.patch_size)
        {
            return Err(Error::Format(format!(
                "training image {id} ({}x{}) is smaller than the patch size {}",
                img.height(),
                img.width(),
                cfg.patch_size
            )));
        }
        Ok(Self {
            cfg,
            images,
            cached: None,
        })
    }

    fn epoch(&mut self, epoch: u64) -> Result<&(u64, Vec<GrayImage>, Vec<usize>)> {
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let crop_seed = seed::derive(seed::derive(self.cfg.seed, TAG_CROP), epoch);
            let crops = (0..self.cfg.patches)
                .map(|p| {
                    let img = &self.images[p % self.images.len()].1;
                    let s = seed::derive(crop_seed, p as u64);
                    let (r, c) = patch_corners(img.height(), img.width(), self.cfg.patch_size, 1, s)?[0];
                    img.crop(r, c, self.cfg.patch_size)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut order: Vec<usize> = (0..self.cfg.patches).collect();
            let mut rng = seed::rng(seed::derive(seed::derive(self.cfg.seed, TAG_SHUFFLE), epoch));
            order.shuffle(&mut rng);
            self.cached = Some((epoch, crops, order));
        }
        Ok(self.cached.as_ref().expect("just filled"))
    }

    /// Clean patches of optimizer step `step` as a `[B,1,P,P]` tensor.
    pub fn clean_batch(&mut self, step: u64) -> Result<Tensor> {
        let bpe = self.cfg.batches_per_epoch();
        let (epoch, index) = (step / bpe, (step % bpe) as usize);
        let bs = self.cfg.batch_size;
        let p = self.cfg.patch_size;
        let (_, crops, order) = self.epoch(epoch)?;
        let picks = &order[index * bs..((index + 1) * bs).min(order.len())];
        let mut data = Vec::with_capacity(picks.len() * p * p);
        for &i in picks {
            data.extend_from_slice(crops[i].pixels());
        }
        Tensor::new([picks.len(), 1, p, p], data)
    }

    pub fn noise_seed(&self, step: u64) -> u64 {
        let base = seed::derive(self.cfg.seed, TAG_NOISE);
        if self.cfg.resample_noise {
            seed::derive(base, step)
        } else {
            base
        }
    }
}

/// Result of [`train`]: the final state and the per-step losses it produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// `(step, loss)` with 1-based step numbers.
    pub losses: Vec<(u64, f64)>,
}

/// One optimizer step on a clean batch; returns the loss before the update.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    noisy: &Tensor,
    clean: &Tensor,
    eps: f64,
) -> Result<f64> {
    let loss_value = {
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let x = tape.constant(noisy.detached());
        let y = model.forward_bound(&tape, &bound, x, &ForwardOptions::default())?;
        let target = tape.constant(clean.detached());
        let loss = y.charbonnier(target, eps)?;
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss became {value}")));
        }
        let grads = tape.backward(loss)?;
        let params = model.params_mut();
        for (i, var) in bound.iter().enumerate() {
            grads.accumulate_into(*var, params.tensor_mut(i))?;
        }
        value
    };
    adam.step(model.params_mut())?;
    model.params_mut().zero_grad();
    if !model.params().all_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(loss_value)
}

/// Trains from scratch, or from `resume`, up to `cfg.total_steps()`.
///
/// `progress` is called after every step with `(step, loss)`.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    images: &[(String, GrayImage)],
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(u64, f64),
) -> Result<TrainOutcome> {
    let (mut model, adam, start) = match resume {
        Some(ck) => {
            if ck.model.config() != model_cfg {
                return Err(Error::Config(format!(
                    "checkpoint holds {} but the config describes {}",
                    ck.model.config().model_id(),
                    model_cfg.model_id()
                )));
            }
            (ck.model, ck.optimizer, ck.step)
        }
        None => (Model::new(model_cfg.clone())?, None, 0),
    };
    let mut adam = adam.unwrap_or_else(|| Adam::new(AdamConfig::with_lr(cfg.lr), model.params()));
    adam.config.lr = cfg.lr;

    let mut stream = BatchStream::new(cfg, images)?;
    let mut losses = Vec::new();
    let total = cfg.total_steps();
    for step in start..total {
        let clean = stream.clean_batch(step)?;
        let batch = corrupt(&clean, cfg.sigma, cfg.realizations, stream.noise_seed(step))?;
        let loss = train_step(&mut model, &mut adam, &batch.noisy, &batch.clean, cfg.charbonnier_eps)
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("step {}: {m}", step + 1)),
                other => other,
            })?;
        losses.push((step + 1, loss));
        progress(step + 1, loss);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            optimizer: Some(adam),
            step: total.max(start),
        },
        losses,
    })
}
