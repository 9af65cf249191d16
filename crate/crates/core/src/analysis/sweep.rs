use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::model::{ForwardOptions, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gate_index: usize,
    pub sweep_values: Vec<f64>,
    pub psnr_curve: Vec<f64>,
    pub ssim_curve: Vec<f64>,
    /// `softplus(beta_j)` of the unmodified model.
    pub learned_alpha: f64,
}

/// Re-evaluates the model with skip gate `gate_index` pinned to each value.
///
/// The override bypasses softplus and lives only in the forward options, so
/// the model's parameters are never touched.
pub fn sweep_gate(
    model: &Model,
    gate_index: usize,
    values: &[f64],
    eval_set: &EvalSet,
    sigma_255: f64,
) -> Result<SweepResult> {
    let gates = model.gate_values()?;
    let learned_alpha = *gates.get(gate_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "gate index {gate_index} out of range ({} gates)",
            gates.len()
        ))
    })?;
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gate values must be finite and non-negative, got {v}"
        )));
    }
    let mut psnr_curve = Vec::with_capacity(values.len());
    let mut ssim_curve = Vec::with_capacity(values.len());
    for &alpha in values {
        let opts = ForwardOptions::default().with_gate(gate_index, alpha);
        let (p, s) = eval_set.mean_scores(model, sigma_255, &opts)?;
        psnr_curve.push(p);
        ssim_curve.push(s);
    }
    Ok(SweepResult {
        gate_index,
        sweep_values: values.to_vec(),
        psnr_curve,
        ssim_curve,
        learned_alpha,
    })
}

/// `steps` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl SweepResult {
    /// CSV with columns `alpha,psnr_db,ssim`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "psnr_db", "ssim"])?;
        for ((a, p), s) in self.sweep_values.iter().zip(&self.psnr_curve).zip(&self.ssim_curve) {
            w.write_record([format!("{a}"), crate::metrics::fmt_psnr(*p), crate::metrics::fmt_ssim(*s)])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}
