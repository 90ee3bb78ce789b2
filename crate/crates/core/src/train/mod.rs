//! Two-stage multi-task training with per-epoch validation and seed averaging.

pub mod config;
pub mod joint;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DiscourseInstance;
use crate::eval::{EvalError, MetricsReport};
use crate::model::ModelError;

pub use config::{OptimizerSettings, SelectionMetric, StageConfig, TrainRunConfig};
pub use joint::JointTrainer;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("{which} loss is not finite ({value})")]
    NonFinite { which: &'static str, value: f64 },
    #[error("{which} loss is negative ({value})")]
    NegativeLoss { which: &'static str, value: f64 },
    #[error("empty {0} dataset")]
    EmptyDataset(&'static str),
    #[error("metrics log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

/// `alpha * class_loss + beta * gen_loss`.
pub fn compute_loss(class_loss: f64, gen_loss: f64, cfg: &StageConfig) -> Result<f64, TrainError> {
    for (which, value) in [("classification", class_loss), ("generation", gen_loss)] {
        if !value.is_finite() {
            return Err(TrainError::NonFinite { which, value });
        }
        if value < 0.0 {
            return Err(TrainError::NegativeLoss { which, value });
        }
    }
    Ok(cfg.alpha * class_loss + cfg.beta * gen_loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub class_loss: f64,
    pub gen_loss: f64,
}

/// What the stage runner needs from a model.
pub trait Trainable {
    type Snapshot;

    /// Called once before the first epoch of a stage.
    fn begin_stage(&mut self, cfg: &StageConfig) -> Result<(), TrainError>;

    fn train_epoch(
        &mut self,
        data: &[DiscourseInstance],
        cfg: &StageConfig,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochStats, TrainError>;

    fn evaluate(&self, data: &[DiscourseInstance]) -> Result<MetricsReport, TrainError>;

    fn snapshot(&self) -> Result<Self::Snapshot, TrainError>;

    fn restore(&mut self, snapshot: &Self::Snapshot) -> Result<(), TrainError>;

    fn save_checkpoint(&self, dir: &Path) -> Result<(), TrainError>;
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    /// 0 is the evaluation before any update in the stage.
    pub epoch: usize,
    pub seed: u64,
    pub train_loss: Option<f64>,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

/// Append-only record-per-line metrics log, mirrored in memory.
#[derive(Debug, Default)]
pub struct MetricsLog {
    path: Option<PathBuf>,
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn append_to(path: &Path) -> Self {
        Self {
            path: Some(path.to_path_buf()),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, rec: EpochRecord) -> Result<(), TrainError> {
        if let Some(path) = &self.path {
            let err = |source| TrainError::Log {
                path: path.clone(),
                source,
            };
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(f, "{line}").map_err(err)?;
        }
        self.records.push(rec);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub stage: usize,
    pub best_epoch: usize,
    pub best: MetricsReport,
    pub records: Vec<EpochRecord>,
}

fn selected(m: &MetricsReport, metric: SelectionMetric) -> f64 {
    match metric {
        SelectionMetric::Accuracy => m.accuracy,
        SelectionMetric::MacroF1 => m.macro_f1,
    }
}

/// Options shared by the stages of one run.
#[derive(Debug, Clone)]
pub struct StageRun<'a> {
    pub stage: usize,
    pub seed: u64,
    pub batch: usize,
    pub metric: SelectionMetric,
    pub checkpoint: Option<&'a Path>,
}

/// Trains one stage and leaves the model at its best validation epoch.
///
/// Epoch 0 evaluates the incoming weights, so a later stage starts from the
/// previous stage's best. On a non-finite loss the best weights are restored
/// and the error is returned; the saved checkpoint is the last finite best.
pub fn run_stage<M: Trainable>(
    model: &mut M,
    train: &[DiscourseInstance],
    val: &[DiscourseInstance],
    cfg: &StageConfig,
    run: &StageRun<'_>,
    log: &mut MetricsLog,
) -> Result<StageResult, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    rng.set_stream(run.stage as u64);
    model.begin_stage(cfg)?;

    let mut records = Vec::new();
    let mut record = |log: &mut MetricsLog, epoch, train_loss, m: &MetricsReport| {
        let rec = EpochRecord {
            stage: run.stage,
            epoch,
            seed: run.seed,
            train_loss,
            val_accuracy: m.accuracy,
            val_macro_f1: m.macro_f1,
        };
        records.push(rec.clone());
        log.push(rec)
    };

    let mut best = model.evaluate(val)?;
    let mut best_epoch = 0;
    let mut best_snap = model.snapshot()?;
    record(log, 0, None, &best)?;
    if let Some(dir) = run.checkpoint {
        model.save_checkpoint(dir)?;
    }
    for epoch in 1..=cfg.epochs {
        let stats = match model.train_epoch(train, cfg, run.batch, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                model.restore(&best_snap)?;
                return Err(e);
            }
        };
        let m = model.evaluate(val)?;
        record(log, epoch, Some(stats.loss), &m)?;
        // later epochs win ties
        if selected(&m, run.metric) >= selected(&best, run.metric) {
            best = m;
            best_epoch = epoch;
            best_snap = model.snapshot()?;
            if let Some(dir) = run.checkpoint {
                model.save_checkpoint(dir)?;
            }
        }
    }
    model.restore(&best_snap)?;
    Ok(StageResult {
        stage: run.stage,
        best_epoch,
        best,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub stages: Vec<StageResult>,
    /// Validation metrics of the last stage's best checkpoint.
    pub final_metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub seeds: usize,
}

pub fn aggregate(results: &[MetricsReport]) -> Aggregate {
    let n = results.len() as f64;
    Aggregate {
        accuracy: results.iter().map(|m| m.accuracy).sum::<f64>() / n,
        macro_f1: results.iter().map(|m| m.macro_f1).sum::<f64>() / n,
        seeds: results.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
}

/// Runs every stage in order for each seed on a fresh model from `make_model(seed)`.
pub fn two_stage_train<M, F>(
    mut make_model: F,
    train: &[DiscourseInstance],
    val: &[DiscourseInstance],
    run_cfg: &TrainRunConfig,
    log: &mut MetricsLog,
) -> Result<TrainReport, TrainError>
where
    M: Trainable,
    F: FnMut(u64) -> Result<M, TrainError>,
{
    run_cfg.validate()?;
    let mut per_seed = Vec::new();
    for &seed in &run_cfg.seeds {
        let mut model = make_model(seed)?;
        let mut stages = Vec::new();
        for (k, cfg) in run_cfg.stages.iter().enumerate() {
            let dir = run_cfg
                .checkpoint_dir
                .as_ref()
                .map(|d| d.join(format!("seed-{seed}")).join(format!("stage-{}", k + 1)));
            let run = StageRun {
                stage: k + 1,
                seed,
                batch: run_cfg.effective_batch(),
                metric: run_cfg.selection_metric,
                checkpoint: dir.as_deref(),
            };
            stages.push(run_stage(&mut model, train, val, cfg, &run, log)?);
        }
        let final_metrics = stages.last().expect("at least one stage").best.clone();
        per_seed.push(SeedResult {
            seed,
            stages,
            final_metrics,
        });
    }
    let finals: Vec<MetricsReport> = per_seed.iter().map(|s| s.final_metrics.clone()).collect();
    Ok(TrainReport {
        aggregate: aggregate(&finals),
        per_seed,
    })
}
