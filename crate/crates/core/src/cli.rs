//! Command-line interface behind the `hern` binary.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cfa::{pack_bayer, RgbImage};
use crate::config::RunConfig;
use crate::dataset::{list_pngs, load_dataset, read_mosaic_png, read_rgb_png, write_dataset, write_rgb_png};
use crate::ensemble::epoch_ensemble;
use crate::error::{HernError, Result};
use crate::memory::{estimate_memory, max_feasible_patch, memory_curve, ArchSpec};
use crate::metrics::{format_db, psnr, ssim};
use crate::model::Hern;
use crate::train::{load_checkpoint, Checkpoint, CheckpointPolicy, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hern", version, about = "RAW-to-RGB network: data, training, inference and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run config
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config: desk or paper
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::desk(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic RAW/RGB pairs and a manifest
    MakeDataset {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset root (default: data.root from the config)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Progressive training with per-epoch checkpoints and a metrics CSV
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from this checkpoint's stage/epoch cursor
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Output directory (default: output_dir from the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep every epoch's checkpoint instead of the last five plus best
        #[arg(long)]
        keep_all: bool,
        /// Validate and print the schedule without training
        #[arg(long)]
        dry_run: bool,
    },
    /// Run one or more checkpoints on mosaic PNGs (files or directories)
    Infer {
        /// Comma-separated checkpoint paths; several are epoch-ensembled
        #[arg(long, value_delimiter = ',', required = true)]
        checkpoints: Vec<PathBuf>,
        /// Average over horizontal, vertical and combined flips
        #[arg(long)]
        self_ensemble: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// PSNR and SSIM of predictions against targets, matched by file name.
    ///
    /// Images are clamped to [0, 1]. PSNR uses peak 1 and reports `inf` for
    /// identical images. SSIM uses K1 = 0.01, K2 = 0.03 and an 11x11
    /// Gaussian window with sigma 1.5 over the valid region, averaged over
    /// the three channels.
    Eval {
        pred: PathBuf,
        target: PathBuf,
        /// Also write the CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Activation-memory tables and memory-vs-side curves
    EstimateMemory {
        #[command(flatten)]
        config: ConfigArgs,
        /// Side for the per-layer tables
        #[arg(long, default_value_t = 312)]
        side: usize,
        /// Budget for the feasible-side search, in GiB
        #[arg(long, default_value_t = 12.0)]
        budget_gib: f64,
        /// Largest side on the curves
        #[arg(long, default_value_t = 512)]
        max_side: usize,
        /// Count forward activations only
        #[arg(long)]
        forward_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| HernError::io("<stdout>", e))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::MakeDataset { config, out: root } => {
            let cfg = config.resolve()?;
            let root = root.unwrap_or(cfg.data.root.clone());
            let m = write_dataset(&root, &cfg.data.synthetic, cfg.seed)?;
            emit(out, &format!("wrote {} pairs to {}\n", m.ids.len(), root.display()))
        }
        Command::Train {
            config,
            resume,
            out: dir,
            keep_all,
            dry_run,
        } => {
            let mut cfg = config.resolve()?;
            if let Some(d) = dir {
                cfg.output_dir = d;
            }
            cmd_train(&cfg, resume.as_deref(), keep_all, dry_run, out)
        }
        Command::Infer {
            checkpoints,
            self_ensemble,
            out: dir,
            inputs,
        } => cmd_infer(&checkpoints, self_ensemble, &dir, &inputs, out),
        Command::Eval { pred, target, out: csv } => {
            let text = eval_csv(&pred, &target)?;
            if let Some(p) = csv {
                fs::write(&p, &text).map_err(|e| HernError::io(p, e))?;
            }
            emit(out, &text)
        }
        Command::EstimateMemory {
            config,
            side,
            budget_gib,
            max_side,
            forward_only,
            out: dir,
        } => {
            let cfg = config.resolve()?;
            if !(budget_gib > 0.0 && budget_gib.is_finite()) {
                return Err(HernError::Config(format!("budget {budget_gib} GiB must be positive")));
            }
            cmd_estimate_memory(&cfg, side, (budget_gib * (1u64 << 30) as f64) as u64, max_side, !forward_only, &dir, out)
        }
    }
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>, keep_all: bool, dry_run: bool, out: &mut dyn Write) -> Result<()> {
    emit(out, &format!("schedule {}\n", cfg.schedule))?;
    let resumed = resume.map(load_checkpoint).transpose()?;
    if let Some(ck) = &resumed {
        if ck.config != cfg.model {
            ck.expect_config(&cfg.model)?;
            return Err(HernError::Config("checkpoint model config differs from the run config".into()));
        }
        emit(out, &format!("resuming after stage {} epoch {}\n", ck.stage_index, ck.epoch_index))?;
    }
    if dry_run {
        return Ok(());
    }
    let data = load_dataset(&cfg.data.root)
        .map_err(|e| HernError::Dataset(format!("{e} (run make-dataset first)")))?;
    let policy = if keep_all {
        CheckpointPolicy::every_epoch(cfg.checkpoint_dir())
    } else {
        CheckpointPolicy::retained(cfg.checkpoint_dir())
    };
    let trainer = match resumed {
        Some(ck) => Trainer::from_checkpoint(ck, cfg.seed)?,
        None => Trainer::new(Hern::new(cfg.model.clone(), cfg.seed)?, cfg.seed),
    };
    let mut trainer = trainer
        .with_checkpoints(policy)
        .with_metrics_log(cfg.metrics_path());
    let rows = trainer.progressive_train(&data, &cfg.schedule)?;
    for r in &rows {
        emit(out, &format!("{}\n", r.csv_row()))?;
    }
    let final_path = cfg.output_dir.join("final.ckpt");
    crate::train::save_checkpoint(&trainer.checkpoint(), &final_path)?;
    emit(out, &format!("final checkpoint {}\n", final_path.display()))
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_pngs(p)?);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(HernError::Config("no input PNGs".into()));
    }
    Ok(files)
}

pub fn cmd_infer(checkpoints: &[PathBuf], self_ens: bool, dir: &Path, inputs: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let cks: Vec<Checkpoint> = checkpoints.iter().map(|p| load_checkpoint(p)).collect::<Result<_>>()?;
    if let Some(i) = cks.iter().position(|c| c.config != cks[0].config) {
        return Err(HernError::Config(format!(
            "{} has a different model config than {}",
            checkpoints[i].display(),
            checkpoints[0].display()
        )));
    }
    let files = collect_inputs(inputs)?;
    fs::create_dir_all(dir).map_err(|e| HernError::io(dir, e))?;
    for f in files {
        let raw = pack_bayer(&read_mosaic_png(&f)?)?;
        let rgb = epoch_ensemble(&cks, &raw, self_ens)?;
        let name = f.file_name().ok_or_else(|| HernError::Config(format!("bad input {}", f.display())))?;
        let dst = dir.join(name);
        write_rgb_png(&dst, &rgb)?;
        emit(out, &format!("{} -> {} ({}x{})\n", f.display(), dst.display(), rgb.width(), rgb.height()))?;
    }
    Ok(())
}

/// `name,psnr,ssim` per image plus a `mean` row.
pub fn eval_csv(pred: &Path, target: &Path) -> Result<String> {
    let files = list_pngs(pred)?;
    if files.is_empty() {
        return Err(HernError::Dataset(format!("no PNGs in {}", pred.display())));
    }
    let mut text = String::from("name,psnr,ssim\n");
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for f in &files {
        let name = f.file_name().unwrap();
        let a: RgbImage = read_rgb_png(f)?;
        let b = read_rgb_png(&target.join(name))?;
        let (p, s) = (psnr(&a, &b, 1.0)?, ssim(&a, &b)?);
        sum_p += p;
        sum_s += s;
        text.push_str(&format!("{},{},{:.6}\n", name.to_string_lossy(), format_db(p), s));
    }
    let n = files.len() as f64;
    text.push_str(&format!("mean,{},{:.6}\n", format_db(sum_p / n), sum_s / n));
    Ok(text)
}

pub fn cmd_estimate_memory(
    cfg: &RunConfig,
    side: usize,
    budget: u64,
    max_side: usize,
    include_grad: bool,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let specs = [ArchSpec::hern(&cfg.model), ArchSpec::rcan_matched(&cfg.model)];
    let tables: Vec<_> = specs
        .iter()
        .map(|s| estimate_memory(s, side, 1, include_grad))
        .collect::<Result<_>>()?;
    fs::create_dir_all(dir).map_err(|e| HernError::io(dir, e))?;
    for (spec, table) in specs.iter().zip(&tables) {
        let p = dir.join(format!("{}_layers.csv", spec.name));
        fs::write(&p, table.to_csv()).map_err(|e| HernError::io(p, e))?;
        let mut curve = String::from("side,bytes\n");
        for (s, b) in memory_curve(spec, max_side, 1, include_grad)? {
            curve.push_str(&format!("{s},{b}\n"));
        }
        let p = dir.join(format!("{}_curve.csv", spec.name));
        fs::write(&p, curve).map_err(|e| HernError::io(p, e))?;
    }
    let mut summary = String::from("arch,side,total_bytes,max_side_under_budget\n");
    for (spec, table) in specs.iter().zip(&tables) {
        let best = max_feasible_patch(spec, budget, 1, include_grad)?;
        summary.push_str(&format!("{},{side},{},{best}\n", spec.name, table.total_bytes));
    }
    let p = dir.join("summary.csv");
    fs::write(&p, &summary).map_err(|e| HernError::io(p, e))?;
    emit(out, &summary)
}
