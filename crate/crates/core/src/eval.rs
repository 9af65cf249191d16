//! Noisy-image evaluation shared by the harness and the gate sweep.

use crate::data::{add_noise, GrayImage};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, MetricRow};
use crate::model::{ForwardOptions, Model};
use crate::seed;
use crate::tensor::Tensor;

/// Clean evaluation images plus the seed their noise fields derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub images: Vec<(String, GrayImage)>,
    pub seed: u64,
}

/// Per-image result including the clipped denoised output.
#[derive(Debug, Clone)]
pub struct Denoised {
    pub image_id: String,
    pub output: GrayImage,
    pub psnr_db: f64,
    pub ssim: f64,
}

impl EvalSet {
    pub fn new(images: Vec<(String, GrayImage)>, seed: u64) -> Self {
        Self { images, seed }
    }

    /// Noisy input for image `index`. `sigma_255 == 0` returns the clean image.
    pub fn noisy_input(&self, index: usize, sigma_255: f64) -> Result<Tensor> {
        let clean = self.images[index].1.to_tensor();
        if sigma_255 == 0.0 {
            return Ok(clean);
        }
        let key = seed::derive(self.seed, sigma_255.to_bits());
        add_noise(&clean, sigma_255, seed::derive(key, index as u64))
    }

    /// Denoises every image and scores the clipped output against the clean one.
    pub fn run(&self, model: &Model, sigma_255: f64, opts: &ForwardOptions) -> Result<Vec<Denoised>> {
        if sigma_255 < 0.0 || !sigma_255.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid sigma {sigma_255}")));
        }
        (0..self.images.len())
            .map(|i| {
                let (id, clean) = &self.images[i];
                let y = model.denoise_with(&self.noisy_input(i, sigma_255)?, opts)?;
                if !y.is_finite() {
                    return Err(Error::Numeric(format!("non-finite output on image {id}")));
                }
                let output = GrayImage::from_tensor_clipped(&y)?;
                Ok(Denoised {
                    image_id: id.clone(),
                    psnr_db: psnr(clean, &output)?,
                    ssim: ssim(clean, &output)?,
                    output,
                })
            })
            .collect()
    }

    pub fn metric_rows(
        &self,
        model: &Model,
        model_id: &str,
        sigma_255: f64,
        opts: &ForwardOptions,
    ) -> Result<Vec<MetricRow>> {
        Ok(self
            .run(model, sigma_255, opts)?
            .into_iter()
            .map(|d| MetricRow {
                model_id: model_id.to_string(),
                sigma: sigma_255,
                image_id: d.image_id,
                psnr_db: d.psnr_db,
                ssim: d.ssim,
            })
            .collect())
    }

    /// Mean PSNR and SSIM over the set.
    pub fn mean_scores(&self, model: &Model, sigma_255: f64, opts: &ForwardOptions) -> Result<(f64, f64)> {
        let rows = self.run(model, sigma_255, opts)?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("evaluation set is empty".into()));
        }
        let n = rows.len() as f64;
        Ok((
            rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        ))
    }
}
