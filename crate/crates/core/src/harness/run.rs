use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, RunConfig};
use super::train::train;
use crate::analysis::{spectral_centroid, SpectrumProfile, SweepResult};
use crate::data::save_image;
use crate::error::{Error, Result};
use crate::eval::EvalSet;
use crate::metrics::{write_aggregate_csv, AggregateRow, MetricsReport, SummaryTable};
use crate::model::{Checkpoint, ForwardOptions, Model};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

pub fn code_version() -> String {
    format!("addunet {}", env!("CARGO_PKG_VERSION"))
}

/// Everything needed to reproduce and locate the artifacts of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_id: String,
    pub config: RunConfig,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub steps_completed: u64,
    pub final_loss: Option<f64>,
    #[serde(default)]
    pub final_metrics: Vec<AggregateRow>,
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &serde_json::to_string_pretty(self)?)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loss log lines up to and including `max_step`, header excluded.
fn read_loss_log(path: &Path, max_step: u64) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = Vec::new();
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let step: u64 = line
            .split(',')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: bad loss line `{line}`", path.display())))?;
        if step <= max_step {
            kept.push(line);
        }
    }
    Ok(kept)
}

/// Trains per `cfg` into `out_dir`, optionally continuing from a checkpoint.
///
/// Writes `checkpoint.bin`, `loss.csv` (`step,loss`), `config.json` and
/// `manifest.json`; when the config has an `eval` section the evaluation
/// CSVs are written too and their aggregates land in the manifest.
pub fn run_train(
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    progress: impl FnMut(u64, f64),
) -> Result<RunManifest> {
    cfg.validate()?;
    let images = cfg.train.data.load()?;
    let resume_ck = resume.map(Checkpoint::load).transpose()?;
    let start_step = resume_ck.as_ref().map_or(0, |c| c.step);
    ensure_dir(out_dir)?;

    let clock = Instant::now();
    let loss_path = out_dir.join(LOSS_FILE);
    let mut previous = Vec::new();
    if start_step > 0 {
        let prior = resume.and_then(Path::parent).map(|d| d.join(LOSS_FILE));
        if let Some(p) = prior.filter(|p| p.is_file()) {
            previous = read_loss_log(&p, start_step)?;
        }
    }
    let outcome = train(&cfg.model, &cfg.train, &images, resume_ck, progress)?;

    let mut log = create(&loss_path)?;
    let io = |e| Error::io(&loss_path, e);
    writeln!(log, "step,loss").map_err(io)?;
    for line in &previous {
        writeln!(log, "{line}").map_err(io)?;
    }
    for (step, loss) in &outcome.losses {
        writeln!(log, "{step},{loss}").map_err(io)?;
    }
    log.flush().map_err(io)?;

    let ck_path = out_dir.join(CHECKPOINT_FILE);
    outcome.checkpoint.save(&ck_path)?;
    write_text(&out_dir.join(CONFIG_FILE), &cfg.to_json())?;

    let final_metrics = match &cfg.eval {
        Some(e) => run_eval(&outcome.checkpoint.model, e, &out_dir.join("eval"))?.aggregates(),
        None => Vec::new(),
    };
    let final_loss = outcome.losses.last().map(|l| l.1).or_else(|| {
        previous
            .last()
            .and_then(|l| l.split(',').nth(1))
            .and_then(|v| v.parse().ok())
    });
    let manifest = RunManifest {
        model_id: cfg.model.model_id(),
        config: cfg.clone(),
        code_version: code_version(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        steps_completed: outcome.checkpoint.step,
        final_loss,
        final_metrics,
        checkpoint: ck_path,
        loss_log: loss_path,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Evaluates `model` on every noise level of `cfg`, writing
/// `metrics.csv`, `aggregate.csv` and optionally `denoised/sigma<s>/<id>.png`.
pub fn run_eval(model: &Model, cfg: &EvalConfig, out_dir: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let set = EvalSet::new(cfg.data.load()?, cfg.seed);
    let model_id = model.config().model_id();
    let mut report = MetricsReport::default();
    ensure_dir(out_dir)?;
    for &sigma in &cfg.sigmas {
        let results = set.run(model, sigma, &ForwardOptions::default())?;
        if cfg.write_images {
            let dir = out_dir
                .join("denoised")
                .join(format!("sigma{}", crate::metrics::fmt_sigma(sigma)));
            ensure_dir(&dir)?;
            for d in &results {
                save_image(&d.output, dir.join(format!("{}.png", d.image_id)))?;
            }
        }
        for d in results {
            report.push(crate::metrics::MetricRow {
                model_id: model_id.clone(),
                sigma,
                image_id: d.image_id,
                psnr_db: d.psnr_db,
                ssim: d.ssim,
            });
        }
    }
    report.write_rows_csv(create(&out_dir.join("metrics.csv"))?)?;
    report.write_aggregate_csv(create(&out_dir.join("aggregate.csv"))?)?;
    Ok(report)
}

/// Final evaluation rows of several runs; every run must have been evaluated.
pub fn manifest_rows(manifests: &[RunManifest]) -> Result<Vec<AggregateRow>> {
    if let Some(m) = manifests.iter().find(|m| m.final_metrics.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "run {} has no evaluation metrics",
            m.model_id
        )));
    }
    Ok(manifests.iter().flat_map(|m| m.final_metrics.clone()).collect())
}

/// Combines the final metrics of several runs into one table.
pub fn table_from_manifests(manifests: &[RunManifest]) -> Result<SummaryTable> {
    if manifests.is_empty() {
        return Err(Error::InvalidArgument("table needs at least one manifest".into()));
    }
    SummaryTable::build(&manifest_rows(manifests)?)
}

/// Rows of an `aggregate.csv` written by [`run_eval`].
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number `{}`", path.display(), field(i))))
        };
        rows.push(AggregateRow {
            model_id: field(0).to_string(),
            sigma: num(1)?,
            psnr_db: num(2)?,
            ssim: num(3)?,
            images: num(4)? as usize,
        });
    }
    Ok(rows)
}

pub fn write_sweep(result: &SweepResult, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    result.write_csv(create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub layer: String,
    pub centroid: f64,
}

/// Writes per-layer radial CSVs, top-K spectrum PGMs, `centroids.csv` and
/// `spectra.json` (the preprocessing choices) into `out_dir`.
pub fn write_spectra(profiles: &[SpectrumProfile], out_dir: &Path) -> Result<Vec<CentroidRow>> {
    ensure_dir(out_dir)?;
    let mut centroids = Vec::new();
    for p in profiles {
        let path = out_dir.join(format!("{}_radial.csv", p.layer));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["frequency", "mean_magnitude", "count"])?;
        for b in &p.radial {
            w.write_record([format!("{}", b.frequency), format!("{}", b.mean_magnitude), b.count.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        for (rank, f) in p.topk.iter().enumerate() {
            let name = format!("{}_top{}_filter{}.pgm", p.layer, rank + 1, f.filter_id);
            save_image(&f.spectrum.to_image()?, out_dir.join(name))?;
        }
        centroids.push(CentroidRow {
            layer: p.layer.clone(),
            centroid: spectral_centroid(&p.radial)?,
        });
    }

    let path = out_dir.join("centroids.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["layer", "centroid"])?;
    for c in &centroids {
        w.write_record([c.layer.clone(), format!("{}", c.centroid)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let meta = serde_json::json!({
        "layers": profiles.iter().map(|p| serde_json::json!({
            "layer": p.layer,
            "pad_to": p.pad_to,
            "channel_reduction": p.reduction,
            "top_k": p.topk.len(),
            "top_k_criterion": "total spectral energy",
            "magnitude": "unnormalised |DFT|, DC-centred",
            "exemplar_scaling": "ln(1+|F|) stretched to [0,255]",
            "top_filters": p.topk.iter().map(|f| serde_json::json!({"filter": f.filter_id, "energy": f.energy})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "centroids": centroids,
    });
    write_text(&out_dir.join("spectra.json"), &serde_json::to_string_pretty(&meta)?)?;
    Ok(centroids)
}

pub fn write_table(table: &SummaryTable, path: &Path) -> Result<()> {
    table.write_csv(create(path)?)
}

/// Aggregate CSV for a list of rows, e.g. loaded from several eval dirs.
pub fn write_aggregates(rows: &[AggregateRow], path: &Path) -> Result<()> {
    write_aggregate_csv(rows, create(path)?)
}
