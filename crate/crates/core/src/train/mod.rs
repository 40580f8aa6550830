//! Optimization loop, learning-rate schedule, early stopping and checkpoints.

mod checkpoint;
mod history;
mod schedule;

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::{for_each_batch, BatchPlan, DataError, SceneStore, WindowSample};
use crate::model::{ForwardMode, GazeModel, ModelError};
use crate::numkernel::{adam_step, AdamConfig, Parameterized, Real};

pub use checkpoint::{blob_path, load_checkpoint, read_manifest, save_checkpoint, Checkpoint, CheckpointManifest, ParamEntry, FORMAT_VERSION};
pub use history::{read_history_csv, write_history_csv, HISTORY_COLUMNS};
pub use schedule::{is_improvement, EarlyStopper, PlateauScheduler, StopDecision, IMPROVEMENT_REL};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptManifest(String),
    #[error("parameter {name}: checkpoint shape {found:?}, model shape {expected:?}")]
    ShapeMismatch { name: String, expected: [usize; 2], found: [usize; 2] },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, windows: Vec<usize> },
    #[error("invalid training setup: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        TrainError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub sched_patience: usize,
    pub sched_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub lambda_aux: f64,
    pub min_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Depth of the batch prefetch queue; 0 packs batches inline.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 32,
            sched_patience: 3,
            sched_factor: 0.5,
            early_stop_patience: 5,
            max_epochs: 20,
            seed: 0,
            lambda_aux: 0.5,
            min_lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            prefetch: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.sched_factor > 0.0 && self.sched_factor < 1.0) {
            return bad("sched_factor must lie in (0, 1)");
        }
        if self.sched_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.min_lr < 0.0 || self.weight_decay < 0.0 || self.lambda_aux < 0.0 {
            return bad("lr must be positive; min_lr, weight_decay and lambda_aux nonnegative");
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_spatial: f64,
    pub val_steps: Vec<f64>,
    /// Mean validation gates `(gaze, head, scene)`.
    pub gates: [f64; 3],
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
    /// Mean per-batch L2 norm of the head-encoder gradient.
    pub head_grad_norm: f64,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Number of completed epochs.
    pub epoch: usize,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub scheduler: PlateauScheduler,
    pub stopper: EarlyStopper,
    pub stopped: bool,
    /// Base seed; epoch `e` shuffles with a stream derived from `(seed, e)`.
    pub seed: u64,
    pub history: Vec<EpochStats>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            best_val_loss: None,
            best_epoch: None,
            scheduler: PlateauScheduler::new(cfg.lr, cfg.sched_factor, cfg.sched_patience, cfg.min_lr),
            stopper: EarlyStopper::new(cfg.early_stop_patience),
            stopped: false,
            seed: cfg.seed,
            history: Vec::new(),
        }
    }
}

/// Sample-weighted loss terms and gate means over a window set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLoss {
    pub total: f64,
    pub spatial: f64,
    pub per_step: Vec<f64>,
    pub aux_head: f64,
    pub aux_scene: f64,
    pub gates: [f64; 3],
    pub count: usize,
}

pub fn evaluate_loss<T: Real>(
    model: &GazeModel<T>,
    windows: &[WindowSample],
    store: &SceneStore,
    batch_size: usize,
) -> Result<EvalLoss, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::InvalidConfig("evaluation set is empty".into()));
    }
    let k = model.config().k_steps;
    let mut acc = EvalLoss { total: 0.0, spatial: 0.0, per_step: vec![0.0; k], aux_head: 0.0, aux_scene: 0.0, gates: [0.0; 3], count: 0 };
    let plan = BatchPlan::sequential(windows.len(), batch_size);
    for_each_batch::<T, TrainError>(&plan, windows, store, 0, |_, batch| {
        let out = model.forward(&batch, ForwardMode::Infer)?.output;
        let l = model.loss(&out, &batch.targets)?;
        let n = batch.size() as f64;
        acc.total += l.total * n;
        acc.spatial += l.spatial * n;
        acc.aux_head += l.aux_head * n;
        acc.aux_scene += l.aux_scene * n;
        for (a, s) in acc.per_step.iter_mut().zip(&l.per_step) {
            *a += s * n;
        }
        for r in 0..out.gates.rows() {
            for (g, v) in acc.gates.iter_mut().zip(out.gates.row(r)) {
                *g += v.f64();
            }
        }
        acc.count += batch.size();
        Ok(())
    })?;
    let n = acc.count as f64;
    acc.total /= n;
    acc.spatial /= n;
    acc.aux_head /= n;
    acc.aux_scene /= n;
    acc.per_step.iter_mut().for_each(|v| *v /= n);
    acc.gates.iter_mut().for_each(|v| *v /= n);
    Ok(acc)
}

pub struct TrainData<'a> {
    pub train: &'a [WindowSample],
    pub val: &'a [WindowSample],
    pub store: &'a SceneStore,
}

/// Where a resumed run picks up: the last state plus the best model so far.
#[derive(Debug)]
pub struct Resume<T> {
    pub state: TrainState,
    pub best: GazeModel<T>,
}

#[derive(Debug)]
pub struct TrainOutcome<T> {
    /// Parameters after the last completed epoch.
    pub last: GazeModel<T>,
    /// Parameters with the lowest validation loss.
    pub best: GazeModel<T>,
    pub state: TrainState,
}

fn grad_norm<T: Real>(params: Vec<&crate::numkernel::Param<T>>) -> f64 {
    params.iter().map(|p| p.grad.sum_squares().f64()).sum::<f64>().sqrt()
}

/// Runs epochs until `max_epochs` or early stopping. With `out_dir`, the
/// last and best checkpoints and the history CSV are rewritten after every
/// epoch. `on_epoch` sees each epoch's stats and may end the run early.
pub fn train<T: Real>(
    mut model: GazeModel<T>,
    data: &TrainData,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<Resume<T>>,
    mut on_epoch: impl FnMut(&EpochStats, &GazeModel<T>) -> ControlFlow<()>,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(TrainError::InvalidConfig("training and validation sets must be nonempty".into()));
    }
    model.set_lambda_aux(cfg.lambda_aux);
    let (mut state, mut best) = match resume {
        Some(r) => (r.state, r.best),
        None => (TrainState::new(cfg), model.clone()),
    };
    best.set_lambda_aux(cfg.lambda_aux);

    while !state.stopped && state.epoch < cfg.max_epochs {
        let epoch = state.epoch;
        let started = Instant::now();
        let lr = state.scheduler.lr;
        let adam = cfg.adam(lr);
        let plan = BatchPlan::shuffled(data.train.len(), cfg.batch_size, state.seed, epoch as u64);
        let (mut loss_sum, mut seen, mut head_norm, mut batches) = (0.0, 0usize, 0.0, 0usize);
        for_each_batch::<T, TrainError>(&plan, data.train, data.store, cfg.prefetch, |bi, batch| {
            model.zero_grads();
            let non_finite = || TrainError::NonFiniteLoss { epoch, batch: bi, windows: batch.indices.clone() };
            let fwd = match model.forward(&batch, ForwardMode::Train) {
                Err(ModelError::NonFinite(_)) => return Err(non_finite()),
                r => r?,
            };
            let loss = match model.backward(&fwd, &batch.targets) {
                Err(ModelError::NonFinite(_)) => return Err(non_finite()),
                r => r?,
            };
            head_norm += grad_norm(model.head_encoder_params());
            for p in model.params_mut() {
                adam_step(p, &adam);
            }
            loss_sum += loss.total * batch.size() as f64;
            seen += batch.size();
            batches += 1;
            Ok(())
        })
        .inspect_err(|e| {
            if let (TrainError::NonFiniteLoss { epoch, batch, windows }, Some(dir)) = (e, out_dir) {
                let dump = serde_json::json!({ "epoch": epoch, "batch": batch, "windows": windows });
                let _ = std::fs::write(dir.join("nonfinite_batch.json"), dump.to_string());
            }
        })?;

        let val = evaluate_loss(&model, data.val, data.store, cfg.batch_size)?;
        state.scheduler.step(val.total);
        if is_improvement(val.total, state.best_val_loss) {
            state.best_val_loss = Some(val.total);
            state.best_epoch = Some(epoch);
            best = model.clone();
        }
        state.stopped = state.stopper.check(val.total) == StopDecision::Stop;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss: val.total,
            val_spatial: val.spatial,
            val_steps: val.per_step,
            gates: val.gates,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            head_grad_norm: head_norm / batches.max(1) as f64,
        };
        state.history.push(stats.clone());
        state.epoch += 1;
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join(LAST_CHECKPOINT), &model, &state)?;
            if state.best_epoch == Some(epoch) {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &best, &state)?;
            }
            write_history_csv(&dir.join(HISTORY_FILE), &state.history)?;
        }
        if on_epoch(&stats, &model).is_break() {
            break;
        }
    }
    if let Some(dir) = out_dir {
        if state.best_epoch.is_none() {
            save_checkpoint(&dir.join(BEST_CHECKPOINT), &best, &state)?;
        }
    }
    Ok(TrainOutcome { last: model, best, state })
}

/// Loads the last checkpoint in `dir` together with the best one for resuming.
pub fn load_resume<T: Real>(dir: &Path) -> Result<(GazeModel<T>, Resume<T>), TrainError> {
    let last = load_checkpoint::<T>(&dir.join(LAST_CHECKPOINT))?;
    let best_path: PathBuf = dir.join(BEST_CHECKPOINT);
    let best = if best_path.exists() { load_checkpoint::<T>(&best_path)?.model } else { last.model.clone() };
    Ok((last.model, Resume { state: last.state, best }))
}
