use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// Weight of the classification loss.
    pub alpha: f64,
    /// Weight of the generation loss.
    pub beta: f64,
    pub lr_encoder: f64,
    /// Learning rate of the classifier head, bridge and decoder.
    pub lr_other: f64,
    pub epochs: usize,
    pub dropout: f64,
    /// Leave encoder weights untouched in this stage.
    pub freeze_encoder: bool,
    pub optimizer: OptimizerSettings,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl StageConfig {
    pub fn stage1() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.6,
            lr_encoder: 5e-6,
            lr_other: 5e-5,
            epochs: 30,
            dropout: 0.3,
            freeze_encoder: false,
            optimizer: OptimizerSettings::default(),
        }
    }

    /// Classification-weighted refinement; the encoder learning rate is kept.
    pub fn stage2() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.2,
            lr_other: 3e-5,
            epochs: 6,
            ..Self::stage1()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: &str| {
            Err(TrainError::InvalidConfig {
                field,
                message: message.to_string(),
            })
        };
        for (field, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and >= 0");
            }
        }
        if self.alpha + self.beta <= 0.0 {
            return bad("alpha", "alpha + beta must be > 0");
        }
        if self.epochs < 1 {
            return bad("epochs", "must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must be in [0, 1)");
        }
        for (field, v) in [("lr_encoder", self.lr_encoder), ("lr_other", self.lr_other)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and >= 0");
            }
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer", "betas must be in [0, 1)");
        }
        if o.eps.is_nan() || o.eps <= 0.0 || o.weight_decay.is_nan() || o.weight_decay < 0.0 {
            return bad("optimizer", "eps must be > 0 and weight_decay >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Accuracy,
    #[default]
    MacroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub stages: Vec<StageConfig>,
    pub seeds: Vec<u64>,
    pub selection_metric: SelectionMetric,
    /// Best checkpoints go to `<dir>/seed-<s>/stage-<k>`; none are written without it.
    pub checkpoint_dir: Option<PathBuf>,
    pub batch_size: usize,
    /// Batches merged into one optimizer step.
    pub grad_accum: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            stages: vec![StageConfig::stage1(), StageConfig::stage2()],
            seeds: vec![13, 42, 87],
            selection_metric: SelectionMetric::MacroF1,
            checkpoint_dir: None,
            batch_size: 16,
            grad_accum: 1,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: &str| {
            Err(TrainError::InvalidConfig {
                field,
                message: message.to_string(),
            })
        };
        if self.stages.is_empty() {
            return bad("stages", "at least one stage is required");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.grad_accum == 0 {
            return bad("grad_accum", "must be >= 1");
        }
        self.stages.iter().try_for_each(StageConfig::validate)
    }

    /// Instances per optimizer step.
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum
    }
}
