use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One image evaluated by one model at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_id: String,
    pub sigma: f64,
    pub image_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Mean of per-image PSNR and SSIM for one `(model, sigma)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model_id: String,
    pub sigma: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

/// PSNR as printed in every CSV: four decimals, `inf` for lossless.
pub fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn fmt_ssim(v: f64) -> String {
    format!("{v:.6}")
}

/// `15` for whole values, otherwise the shortest decimal form.
pub fn fmt_sigma(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl MetricsReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    /// Arithmetic means per `(model, sigma)`, in first-seen order.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut order: Vec<(String, u64)> = Vec::new();
        let mut sums: BTreeMap<(String, u64), (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.model_id.clone(), r.sigma.to_bits());
            let e = sums.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (0.0, 0.0, 0)
            });
            e.0 += r.psnr_db;
            e.1 += r.ssim;
            e.2 += 1;
        }
        order
            .into_iter()
            .map(|key| {
                let (p, s, n) = sums[&key];
                AggregateRow {
                    model_id: key.0,
                    sigma: f64::from_bits(key.1),
                    psnr_db: p / n as f64,
                    ssim: s / n as f64,
                    images: n,
                }
            })
            .collect()
    }

    /// `model_id,sigma,image_id,psnr_db,ssim`.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model_id", "sigma", "image_id", "psnr_db", "ssim"])?;
        for r in &self.rows {
            w.write_record([
                r.model_id.as_str(),
                &fmt_sigma(r.sigma),
                &r.image_id,
                &fmt_psnr(r.psnr_db),
                &fmt_ssim(r.ssim),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// `model_id,sigma,psnr_db,ssim,images`.
    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> Result<()> {
        write_aggregate_csv(&self.aggregates(), out)
    }
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_id", "sigma", "psnr_db", "ssim", "images"])?;
    for r in rows {
        w.write_record([
            r.model_id.as_str(),
            &fmt_sigma(r.sigma),
            &fmt_psnr(r.psnr_db),
            &fmt_ssim(r.ssim),
            &r.images.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Models as rows, one PSNR/SSIM column pair per noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub sigmas: Vec<f64>,
    pub rows: Vec<(String, Vec<(f64, f64)>)>,
}

impl SummaryTable {
    /// Groups aggregates by model. Every model must cover the same noise levels.
    pub fn build(aggregates: &[AggregateRow]) -> Result<Self> {
        if aggregates.is_empty() {
            return Err(Error::InvalidArgument("no results to tabulate".into()));
        }
        let mut models: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(String, u64), (f64, f64)> = BTreeMap::new();
        for a in aggregates {
            if !models.contains(&a.model_id) {
                models.push(a.model_id.clone());
            }
            if cells
                .insert((a.model_id.clone(), a.sigma.to_bits()), (a.psnr_db, a.ssim))
                .is_some()
            {
                return Err(Error::InvalidArgument(format!(
                    "duplicate result for {} at sigma {}",
                    a.model_id,
                    fmt_sigma(a.sigma)
                )));
            }
        }
        let sigma_set = |m: &str| -> Vec<f64> {
            let mut s: Vec<f64> = aggregates
                .iter()
                .filter(|a| a.model_id == m)
                .map(|a| a.sigma)
                .collect();
            s.sort_by(f64::total_cmp);
            s
        };
        let sigmas = sigma_set(&models[0]);
        let mismatched: Vec<String> = models
            .iter()
            .filter(|m| sigma_set(m) != sigmas)
            .map(|m| {
                let s: Vec<String> = sigma_set(m).iter().map(|v| fmt_sigma(*v)).collect();
                format!("{m} has [{}]", s.join(","))
            })
            .collect();
        if !mismatched.is_empty() {
            let base: Vec<String> = sigmas.iter().map(|v| fmt_sigma(*v)).collect();
            return Err(Error::InvalidArgument(format!(
                "inconsistent sigma sets: {} has [{}] but {}",
                models[0],
                base.join(","),
                mismatched.join("; ")
            )));
        }
        let rows = models
            .into_iter()
            .map(|m| {
                let vals = sigmas.iter().map(|s| cells[&(m.clone(), s.to_bits())]).collect();
                (m, vals)
            })
            .collect();
        Ok(Self { sigmas, rows })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["model".to_string()];
        for s in &self.sigmas {
            let s = fmt_sigma(*s);
            h.push(format!("sigma{s}_psnr"));
            h.push(format!("sigma{s}_ssim"));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for (model, vals) in &self.rows {
            let mut rec = vec![model.clone()];
            for (p, s) in vals {
                rec.push(fmt_psnr(*p));
                rec.push(fmt_ssim(*s));
            }
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Plain-text rendering with `PSNR / SSIM` cells.
    pub fn render_text(&self) -> String {
        let mut lines = Vec::new();
        let mut head = format!("{:<28}", "Model (depth, kernels)");
        for s in &self.sigmas {
            head.push_str(&format!(" | {:^17}", format!("sigma={}", fmt_sigma(*s))));
        }
        lines.push(head);
        for (m, vals) in &self.rows {
            let mut line = format!("{m:<28}");
            for (p, s) in vals {
                line.push_str(&format!(" | {:>7} / {:.3}", if p.is_infinite() { "inf".into() } else { format!("{p:.2}") }, s));
            }
            lines.push(line);
        }
        lines.join("\n")
    }
}
