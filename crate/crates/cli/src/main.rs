use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use addunet::analysis::{filter_spectra, linspace, sweep_gate, ChannelReduction, DEFAULT_PAD_TO, DEFAULT_TOP_K};
use addunet::data::{add_noise, load_image, save_image, GrayImage};
use addunet::harness::{
    self, read_aggregate_csv, run_eval, run_train, DataSource, EvalConfig, RunConfig,
    RunManifest,
};
use addunet::metrics::{psnr, ssim, SummaryTable};
use addunet::model::Checkpoint;
use addunet::{Error, EvalSet, Result};

mod fetch;

const OUTPUT_ROOT_ENV: &str = "ADDUNET_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "addunet", version, about = "Train and analyse additive U-Net denoisers")]
struct Cli {
    /// Root for relative output paths.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, loss log and manifest.
    Train(TrainArgs),
    /// Score a checkpoint on noisy copies of an image set.
    Eval(EvalArgs),
    /// Denoise a single image.
    Denoise(DenoiseArgs),
    /// Sweep one skip gate and record PSNR/SSIM per value.
    SweepAlpha(SweepArgs),
    /// Radial spectra and top-K exemplars of convolution filters.
    Spectra(SpectraArgs),
    /// Combine run manifests or aggregate CSVs into one table.
    Table(TableArgs),
    /// Download the Kodak test images (kodim01.png .. kodim24.png).
    FetchDataset(FetchArgs),
    /// Print a preset config or the config JSON schema.
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigSource {
    /// JSON run config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset: preset-overfit, preset-smoke or preset-paper.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<Option<RunConfig>> {
        match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load(p).map(Some),
            (None, Some(name)) => RunConfig::preset(name).map(Some),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, conflicts_with = "epochs")]
    steps: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training noise level on the 0-255 scale.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on a directory of images instead of the configured source.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Skip the evaluation section of the config.
    #[arg(long)]
    no_eval: bool,
    /// Print the loss every N steps (0 = quiet).
    #[arg(long, default_value_t = 100)]
    log_every: u64,
}

#[derive(Args)]
struct EvalSource {
    #[command(flatten)]
    source: ConfigSource,
    /// Directory of clean evaluation images.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Comma-separated noise levels, e.g. `15,25,50`.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Seed for the evaluation noise fields.
    #[arg(long)]
    eval_seed: Option<u64>,
}

impl EvalSource {
    fn resolve(&self) -> Result<EvalConfig> {
        let base = self.source.load()?.and_then(|c| c.eval);
        let data = match (&self.data_dir, &base) {
            (Some(d), _) => DataSource::Dir(d.clone()),
            (None, Some(b)) => b.data.clone(),
            (None, None) => return Err(usage("no evaluation data: pass --data-dir or a config with an `eval` section")),
        };
        let cfg = EvalConfig {
            data,
            sigmas: self
                .sigmas
                .clone()
                .or_else(|| base.as_ref().map(|b| b.sigmas.clone()))
                .unwrap_or_else(|| vec![25.0]),
            seed: self.eval_seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
            write_images: base.is_some_and(|b| b.write_images),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    eval: EvalSource,
    /// Output directory; defaults to `eval/` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    write_images: bool,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output image (.png or .pgm).
    #[arg(long)]
    output: PathBuf,
    /// Add noise of this level first and report PSNR/SSIM against the input.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Gate index; 0 is the deepest skip.
    #[arg(long, default_value_t = 0)]
    gate: usize,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    /// Upper end of the sweep; defaults to twice the learned value.
    #[arg(long)]
    to: Option<f64>,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    /// Noise level of the evaluation images.
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    #[command(flatten)]
    eval: EvalSource,
    /// Output CSV (`alpha,psnr_db,ssim`).
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SpectraArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated layer names; defaults to the first conv of every encoder block.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_PAD_TO)]
    pad_to: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// One spectrum per (output, input) channel pair instead of summing inputs.
    #[arg(long)]
    per_channel: bool,
    #[arg(long, default_value = "spectra")]
    out: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    /// `manifest.json` or `aggregate.csv` files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "table.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FetchArgs {
    /// URL prefix the file names are appended to.
    base_url: String,
    #[arg(long, default_value = "data/kodak")]
    dest: PathBuf,
    /// Only fetch the first N images.
    #[arg(long, default_value_t = 24)]
    count: usize,
}

#[derive(Args)]
struct ConfigArgs {
    /// Print this preset as JSON.
    #[arg(long)]
    preset: Option<String>,
    /// Print the JSON schema of run configs.
    #[arg(long, conflicts_with = "preset")]
    schema: bool,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

struct Ctx {
    output_root: Option<PathBuf>,
}

impl Ctx {
    /// Relative output paths are placed under the output root when one is set.
    fn out_path(&self, p: &Path) -> PathBuf {
        match &self.output_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    let ctx = Ctx {
        output_root: cli.output_root,
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Denoise(a) => cmd_denoise(&ctx, a),
        Command::SweepAlpha(a) => cmd_sweep(&ctx, a),
        Command::Spectra(a) => cmd_spectra(&ctx, a),
        Command::Table(a) => cmd_table(&ctx, a),
        Command::FetchDataset(a) => fetch::run(&ctx.out_path(&a.dest), &a.base_url, a.count),
        Command::Config(a) => cmd_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", cat.label());
            ExitCode::from(cat.exit_code())
        }
    }
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut cfg = a
        .source
        .load()?
        .ok_or_else(|| usage("train needs --config or --preset"))?;
    let t = &mut cfg.train;
    if let Some(s) = a.steps {
        t.steps = Some(s);
        t.epochs = None;
    }
    if let Some(e) = a.epochs {
        t.epochs = Some(e);
        t.steps = None;
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { t.$field = v; })* };
    }
    set!(batch_size, lr, sigma, patch_size, patches, seed);
    if let Some(d) = a.data_dir {
        t.data = DataSource::Dir(d);
    }
    if a.no_eval {
        cfg.eval = None;
    }
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    let out_dir = ctx.out_path(&cfg.output_dir);
    cfg.validate()?;

    let every = a.log_every;
    let manifest = run_train(&cfg, &out_dir, a.resume.as_deref(), |step, loss| {
        if every > 0 && step % every == 0 {
            eprintln!("step {step} loss {loss:.6}");
        }
    })?;
    println!("model      {}", manifest.model_id);
    println!("steps      {}", manifest.steps_completed);
    if let Some(l) = manifest.final_loss {
        println!("final loss {l}");
    }
    for m in &manifest.final_metrics {
        println!(
            "sigma {:<4} PSNR {} dB  SSIM {}",
            addunet::metrics::fmt_sigma(m.sigma),
            addunet::metrics::fmt_psnr(m.psnr_db),
            addunet::metrics::fmt_ssim(m.ssim)
        );
    }
    println!("manifest   {}", out_dir.join(harness::MANIFEST_FILE).display());
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut cfg = a.eval.resolve()?;
    cfg.write_images |= a.write_images;
    let out = match a.out {
        Some(o) => ctx.out_path(&o),
        None => a.checkpoint.parent().unwrap_or(Path::new(".")).join("eval"),
    };
    let report = run_eval(&ck.model, &cfg, &out)?;
    for r in report.aggregates() {
        println!(
            "{} sigma {} PSNR {} SSIM {} ({} images)",
            r.model_id,
            addunet::metrics::fmt_sigma(r.sigma),
            addunet::metrics::fmt_psnr(r.psnr_db),
            addunet::metrics::fmt_ssim(r.ssim),
            r.images
        );
    }
    println!("wrote {}", out.join("aggregate.csv").display());
    Ok(())
}

fn cmd_denoise(ctx: &Ctx, a: DenoiseArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let clean = load_image(&a.input)?;
    let input = match a.sigma {
        Some(s) if s > 0.0 => add_noise(&clean.to_tensor(), s, a.seed)?,
        _ => clean.to_tensor(),
    };
    let y = ck.model.denoise(&input)?;
    if !y.is_finite() {
        return Err(Error::Numeric("model produced non-finite output".into()));
    }
    let out = GrayImage::from_tensor_clipped(&y)?;
    let path = ctx.out_path(&a.output);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        harness::ensure_dir(dir)?;
    }
    save_image(&out, &path)?;
    if a.sigma.is_some_and(|s| s > 0.0) {
        let noisy = GrayImage::from_tensor_clipped(&input)?;
        println!(
            "noisy PSNR {} dB, denoised PSNR {} dB, SSIM {}",
            addunet::metrics::fmt_psnr(psnr(&clean, &noisy)?),
            addunet::metrics::fmt_psnr(psnr(&clean, &out)?),
            addunet::metrics::fmt_ssim(ssim(&clean, &out)?)
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let cfg = a.eval.resolve()?;
    let gates = ck.model.gate_values()?;
    let learned = *gates
        .get(a.gate)
        .ok_or_else(|| usage(format!("gate {} out of range ({} gates)", a.gate, gates.len())))?;
    let to = a.to.unwrap_or(2.0 * learned);
    if a.steps == 0 {
        return Err(usage("--steps must be >= 1"));
    }
    let set = EvalSet::new(cfg.data.load()?, cfg.seed);
    let result = sweep_gate(&ck.model, a.gate, &linspace(a.from, to, a.steps), &set, a.sigma)?;
    let out = ctx.out_path(&a.out);
    harness::write_sweep(&result, &out)?;
    println!("gate {} learned alpha {}", a.gate, result.learned_alpha);
    let (best, peak) = result
        .sweep_values
        .iter()
        .zip(&result.psnr_curve)
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, (v, p)| if *p > acc.1 { (*v, *p) } else { acc });
    println!("peak PSNR {} dB at alpha {best}", addunet::metrics::fmt_psnr(peak));
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_spectra(ctx: &Ctx, a: SpectraArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let layers = a.layers.unwrap_or_else(|| ck.model.encoder_layers());
    if layers.is_empty() {
        return Err(usage("no layers to analyse"));
    }
    let reduction = if a.per_channel {
        ChannelReduction::PerChannel
    } else {
        ChannelReduction::Sum
    };
    let profiles = layers
        .iter()
        .map(|l| filter_spectra(&ck.model, l, a.pad_to, a.top_k, reduction))
        .collect::<Result<Vec<_>>>()?;
    let out = ctx.out_path(&a.out);
    for c in harness::write_spectra(&profiles, &out)? {
        println!("{:<14} centroid {:.6}", c.layer, c.centroid);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_table(ctx: &Ctx, a: TableArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        if p.extension().is_some_and(|e| e == "csv") {
            rows.extend(read_aggregate_csv(p)?);
        } else {
            rows.extend(harness::manifest_rows(&[RunManifest::load(p)?])?);
        }
    }
    let table = SummaryTable::build(&rows)?;
    let out = ctx.out_path(&a.out);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        harness::ensure_dir(dir)?;
    }
    harness::write_table(&table, &out)?;
    print!("{}", table.render_text());
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_config(a: ConfigArgs) -> Result<()> {
    if a.schema {
        print!("{}", include_str!("../../../schema/run-config.schema.json"));
        return Ok(());
    }
    let name = a.preset.as_deref().unwrap_or("preset-smoke");
    println!("{}", RunConfig::preset(name)?.to_json());
    Ok(())
}
