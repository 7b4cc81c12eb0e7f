//! Training: L1 loss, Adam and the progressive-resolution schedule.
//!
//! Parameters and optimizer moments carry unchanged across stages; only the
//! crop size, batch size and learning rate switch. All randomness of an
//! epoch (shuffle, crop offsets, flips) is derived from
//! `(seed, stage, epoch)`, so resuming from any checkpoint replays the same
//! trajectory as an uninterrupted run.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod loss;
mod schedule;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use loss::{l1_loss, l1_loss_grad};
pub use schedule::{TrainSchedule, TrainStage};

use crate::cfa::{random_crop_pair, FlipTransform, PairedSample};
use crate::error::{HernError, Result};
use crate::graph::Graph;
use crate::model::{graph_ops, Hern, ModelConfig};
use crate::params::ModelParams;
use crate::seed;
use crate::tensor::{Scalar, Tensor};

/// L1 loss of one sample and its parameter gradients, scaled as one member
/// of a batch of `batch`.
pub fn sample_loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    raw: &Tensor<T>,
    target: &Tensor<T>,
    batch: usize,
) -> Result<(T, ModelParams<T>)> {
    let mut g = Graph::new(params);
    let x = g.input(raw.clone());
    let out = graph_ops::hern(&mut g, x, cfg)?;
    let pred = g.value(out);
    let loss = l1_loss(std::slice::from_ref(pred), std::slice::from_ref(target))?;
    let seed_grad = l1_loss_grad(pred, target, batch)?;
    let grads = g.backward(out, seed_grad)?;
    Ok((loss, grads.into_params(params)))
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub stage: usize,
    pub epoch: usize,
    pub mean_l1: f64,
    pub lr: f64,
    pub patch_size: usize,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "stage,epoch,mean_l1,lr,patch_size,wall_seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.stage, self.epoch, self.mean_l1, self.lr, self.patch_size, self.wall_seconds
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| HernError::io(path, e))
}

/// Where per-epoch checkpoints go and how many are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointPolicy {
    pub dir: PathBuf,
    /// Keep only the newest `k` files; `None` keeps every epoch.
    pub keep_last: Option<usize>,
    /// Also keep the epoch with the lowest training loss.
    pub keep_best: bool,
}

impl CheckpointPolicy {
    pub fn every_epoch(dir: impl Into<PathBuf>) -> Self {
        CheckpointPolicy {
            dir: dir.into(),
            keep_last: None,
            keep_best: false,
        }
    }

    /// Last five epochs plus the best one.
    pub fn retained(dir: impl Into<PathBuf>) -> Self {
        CheckpointPolicy {
            dir: dir.into(),
            keep_last: Some(5),
            keep_best: true,
        }
    }

    pub fn file_name(stage: usize, epoch: usize) -> String {
        format!("stage{stage:02}-epoch{epoch:04}.ckpt")
    }
}

pub struct Trainer {
    model: Hern,
    optimizer: AdamState<f32>,
    seed: u64,
    checkpoints: Option<CheckpointPolicy>,
    metrics_log: Option<PathBuf>,
    /// Last completed `(stage, epoch)`.
    completed: Option<(usize, usize)>,
    saved: Vec<PathBuf>,
    best: Option<(f64, PathBuf)>,
}

impl Trainer {
    pub fn new(model: Hern, seed: u64) -> Self {
        let optimizer = AdamState::new(&model.params);
        Trainer {
            model,
            optimizer,
            seed,
            checkpoints: None,
            metrics_log: None,
            completed: None,
            saved: Vec::new(),
            best: None,
        }
    }

    /// Continue after the epoch stored in `ckpt`.
    pub fn from_checkpoint(ckpt: Checkpoint, seed: u64) -> Result<Self> {
        let model = Hern::from_parts(ckpt.config, ckpt.params)?;
        Ok(Trainer {
            completed: Some((ckpt.stage_index as usize, ckpt.epoch_index as usize)),
            optimizer: ckpt.optimizer,
            ..Trainer::new(model, seed)
        })
    }

    pub fn with_checkpoints(mut self, policy: CheckpointPolicy) -> Self {
        self.checkpoints = Some(policy);
        self
    }

    /// Append one CSV row per finished epoch, writing the header if the
    /// file does not exist yet.
    pub fn with_metrics_log(mut self, path: impl Into<PathBuf>) -> Self {
        self.metrics_log = Some(path.into());
        self
    }

    pub fn model(&self) -> &Hern {
        &self.model
    }

    pub fn into_model(self) -> Hern {
        self.model
    }

    pub fn optimizer(&self) -> &AdamState<f32> {
        &self.optimizer
    }

    pub fn completed(&self) -> Option<(usize, usize)> {
        self.completed
    }

    /// Checkpoint files currently on disk, oldest first.
    pub fn saved_checkpoints(&self) -> &[PathBuf] {
        &self.saved
    }

    /// Snapshot of the current state tagged with the last completed epoch.
    pub fn checkpoint(&self) -> Checkpoint {
        let (s, e) = self.completed.unwrap_or((0, 0));
        Checkpoint::new(
            self.model.config.clone(),
            self.model.params.clone(),
            self.optimizer.clone(),
            s as u32,
            e as u32,
        )
    }

    /// Run every epoch of `stage` that has not been completed yet.
    pub fn train_stage(
        &mut self,
        dataset: &[PairedSample],
        stage: &TrainStage,
        stage_index: usize,
    ) -> Result<Vec<EpochMetrics>> {
        stage.validate()?;
        check_dataset(dataset, stage.patch_size)?;
        let first = match self.completed {
            Some((s, _)) if s > stage_index => return Ok(Vec::new()),
            Some((s, e)) if s == stage_index => e + 1,
            _ => 0,
        };
        let mut rows = Vec::new();
        for epoch in first..stage.epochs {
            let row = self.run_epoch(dataset, stage, stage_index, epoch)?;
            self.completed = Some((stage_index, epoch));
            self.after_epoch(&row)?;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Run the stages in order, resuming after the last completed epoch.
    pub fn progressive_train(
        &mut self,
        dataset: &[PairedSample],
        schedule: &TrainSchedule,
    ) -> Result<Vec<EpochMetrics>> {
        schedule.validate()?;
        check_dataset(dataset, schedule.max_patch())?;
        let mut rows = Vec::new();
        for (i, stage) in schedule.stages.iter().enumerate() {
            rows.extend(self.train_stage(dataset, stage, i)?);
        }
        Ok(rows)
    }

    fn run_epoch(
        &mut self,
        dataset: &[PairedSample],
        stage: &TrainStage,
        stage_index: usize,
        epoch: usize,
    ) -> Result<EpochMetrics> {
        let start = Instant::now();
        let coords = [stage_index as u64, epoch as u64];
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut seed::derived_rng(self.seed, "shuffle", &coords));
        let mut flips = seed::derived_rng(self.seed, "flip", &coords);
        let cfg = self.model.config.clone();

        let mut total = 0.0f64;
        for (b, batch) in order.chunks(stage.batch_size).enumerate() {
            let mut grads = self.model.params.zeros_like();
            let mut batch_loss = 0.0f64;
            for (k, &idx) in batch.iter().enumerate() {
                let pos = (b * stage.batch_size + k) as u64;
                let crop_seed = seed::derive(self.seed, "crop", &[coords[0], coords[1], pos]);
                let patch = random_crop_pair(&dataset[idx], stage.patch_size, crop_seed)?;
                let flip = FlipTransform::new(flips.random(), flips.random());
                let raw = flip.apply(patch.raw.tensor());
                let rgb = flip.apply(patch.rgb.tensor());
                let (loss, g) =
                    sample_loss_and_grad(&self.model.params, &cfg, &raw, &rgb, batch.len())?;
                if !loss.is_finite() {
                    return Err(HernError::NonFinite(format!(
                        "loss at stage {stage_index} epoch {epoch} batch {b}"
                    )));
                }
                batch_loss += loss as f64;
                for (name, acc) in grads.iter_mut() {
                    acc.add_assign(g.get(name)?);
                }
            }
            total += batch_loss;
            adam_step(&mut self.model.params, &grads, &mut self.optimizer, stage.learning_rate)?;
        }
        Ok(EpochMetrics {
            stage: stage_index,
            epoch,
            mean_l1: total / dataset.len() as f64,
            lr: stage.learning_rate,
            patch_size: stage.patch_size,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn after_epoch(&mut self, row: &EpochMetrics) -> Result<()> {
        if let Some(path) = &self.metrics_log {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| HernError::io(parent, e))?;
            }
            let fresh = !path.exists();
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| HernError::io(path, e))?;
            let mut text = String::new();
            if fresh {
                text.push_str(METRICS_HEADER);
                text.push('\n');
            }
            text.push_str(&row.csv_row());
            text.push('\n');
            f.write_all(text.as_bytes()).map_err(|e| HernError::io(path, e))?;
        }
        let Some(policy) = self.checkpoints.clone() else {
            return Ok(());
        };
        fs::create_dir_all(&policy.dir).map_err(|e| HernError::io(&policy.dir, e))?;
        let path = policy.dir.join(CheckpointPolicy::file_name(row.stage, row.epoch));
        save_checkpoint(&self.checkpoint(), &path)?;
        self.saved.push(path.clone());
        if policy.keep_best && self.best.as_ref().is_none_or(|(l, _)| row.mean_l1 < *l) {
            self.best = Some((row.mean_l1, path));
        }
        if let Some(k) = policy.keep_last {
            let best = self.best.as_ref().map(|(_, p)| p.clone());
            let cut = self.saved.len().saturating_sub(k);
            let (old, recent) = self.saved.split_at(cut);
            let mut kept = Vec::new();
            for p in old {
                if Some(p) == best.as_ref() {
                    kept.push(p.clone());
                } else {
                    fs::remove_file(p).map_err(|e| HernError::io(p, e))?;
                }
            }
            kept.extend_from_slice(recent);
            self.saved = kept;
        }
        Ok(())
    }
}

fn check_dataset(dataset: &[PairedSample], patch: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(HernError::Dataset("training set is empty".into()));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.raw.height() < patch || s.raw.width() < patch {
            return Err(HernError::Dataset(format!(
                "sample {i} is {}x{}, smaller than the {patch}px patch",
                s.raw.height(),
                s.raw.width()
            )));
        }
    }
    Ok(())
}

/// Train `model` for one stage and return the per-epoch metrics.
pub fn train_stage(
    model: &mut Hern,
    dataset: &[PairedSample],
    stage: &TrainStage,
    seed: u64,
) -> Result<Vec<EpochMetrics>> {
    let mut t = Trainer::new(model.clone(), seed);
    let rows = t.train_stage(dataset, stage, 0)?;
    *model = t.into_model();
    Ok(rows)
}

/// Train `model` through every stage of `schedule`.
pub fn progressive_train(
    model: &mut Hern,
    dataset: &[PairedSample],
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<Vec<EpochMetrics>> {
    let mut t = Trainer::new(model.clone(), seed);
    let rows = t.progressive_train(dataset, schedule)?;
    *model = t.into_model();
    Ok(rows)
}
