use std::path::Path;

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compute_loss, EpochStats, StageConfig, Trainable, TrainError};
use crate::corpus::DiscourseInstance;
use crate::eval::{metrics_report, EvalError, MetricsReport};
use crate::model::{ForwardCtx, JointModel, ParamGroup, PreparedInstance};

/// Optimizes a [`JointModel`] with separate AdamW states for the encoder and
/// for everything else.
pub struct JointTrainer {
    pub model: JointModel,
    encoder_opt: Option<AdamW>,
    other_opt: Option<AdamW>,
}

fn adamw(vars: Vec<candle_core::Var>, lr: f64, cfg: &StageConfig) -> Result<AdamW, TrainError> {
    let o = cfg.optimizer;
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
        },
    )?)
}

fn scalar(t: &Tensor) -> Result<f64, TrainError> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl JointTrainer {
    pub fn new(model: JointModel) -> Self {
        Self {
            model,
            encoder_opt: None,
            other_opt: None,
        }
    }

    pub fn into_model(self) -> JointModel {
        self.model
    }

    /// One optimizer step over `batch`; returns `(total, class, gen)` batch means.
    pub fn step(
        &mut self,
        batch: &[PreparedInstance],
        cfg: &StageConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64, f64), TrainError> {
        let (want_c, want_g) = (cfg.alpha > 0.0, cfg.beta > 0.0);
        let mut ctx = ForwardCtx::train(cfg.dropout, ChaCha8Rng::seed_from_u64(rng.random()));
        let mut class_sum: Option<Tensor> = None;
        let mut gen_sum: Option<Tensor> = None;
        let add = |acc: Option<Tensor>, t: Tensor| -> candle_core::Result<Option<Tensor>> {
            Ok(Some(match acc {
                Some(a) => (a + t)?,
                None => t,
            }))
        };
        for inst in batch {
            let (c, g) = self
                .model
                .losses(inst, want_c, want_g, &mut ctx)
                .map_err(|e| e.for_instance(&inst.id))?;
            if let Some(c) = c {
                class_sum = add(class_sum, c)?;
            }
            if let Some(g) = g {
                gen_sum = add(gen_sum, g)?;
            }
        }
        let n = batch.len() as f64;
        let class_mean = class_sum.map(|t| t / n).transpose()?;
        let gen_mean = gen_sum.map(|t| t / n).transpose()?;
        let c = class_mean.as_ref().map(scalar).transpose()?.unwrap_or(0.0);
        let g = gen_mean.as_ref().map(scalar).transpose()?.unwrap_or(0.0);
        let total_value = compute_loss(c, g, cfg)?;

        let total = match (class_mean, gen_mean) {
            (Some(c), Some(g)) => ((c * cfg.alpha)? + (g * cfg.beta)?)?,
            (Some(c), None) => (c * cfg.alpha)?,
            (None, Some(g)) => (g * cfg.beta)?,
            (None, None) => unreachable!("validated stage has a positive weight"),
        };
        let grads = total.backward()?;
        if let Some(opt) = self.encoder_opt.as_mut() {
            opt.step(&grads)?;
        }
        if let Some(opt) = self.other_opt.as_mut() {
            opt.step(&grads)?;
        }
        Ok((total_value, c, g))
    }
}

impl Trainable for JointTrainer {
    type Snapshot = Vec<Tensor>;

    fn begin_stage(&mut self, cfg: &StageConfig) -> Result<(), TrainError> {
        self.encoder_opt = if cfg.freeze_encoder {
            None
        } else {
            Some(adamw(self.model.vars(ParamGroup::Encoder), cfg.lr_encoder, cfg)?)
        };
        let other = [ParamGroup::ClassifierHead, ParamGroup::Bridge, ParamGroup::Decoder]
            .into_iter()
            .flat_map(|g| self.model.vars(g))
            .collect();
        self.other_opt = Some(adamw(other, cfg.lr_other, cfg)?);
        Ok(())
    }

    fn train_epoch(
        &mut self,
        data: &[DiscourseInstance],
        cfg: &StageConfig,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochStats, TrainError> {
        let mut prepared = data
            .iter()
            .map(|i| self.model.prepare(i))
            .collect::<Result<Vec<_>, _>>()?;
        prepared.shuffle(rng);
        let (mut loss, mut class_loss, mut gen_loss) = (0.0, 0.0, 0.0);
        for chunk in prepared.chunks(batch.max(1)) {
            let (t, c, g) = self.step(chunk, cfg, rng)?;
            let w = chunk.len() as f64;
            loss += t * w;
            class_loss += c * w;
            gen_loss += g * w;
        }
        let n = prepared.len() as f64;
        Ok(EpochStats {
            loss: loss / n,
            class_loss: class_loss / n,
            gen_loss: gen_loss / n,
        })
    }

    fn evaluate(&self, data: &[DiscourseInstance]) -> Result<MetricsReport, TrainError> {
        let mut preds = Vec::with_capacity(data.len());
        let mut golds = Vec::with_capacity(data.len());
        for inst in data {
            let gold = inst.label.ok_or_else(|| EvalError::MissingLabel(inst.id.clone()))?;
            preds.push(self.model.classify_instance(inst)?.predicted);
            golds.push(gold);
        }
        Ok(metrics_report(&preds, &golds)?)
    }

    fn snapshot(&self) -> Result<Vec<Tensor>, TrainError> {
        Ok(self.model.snapshot()?)
    }

    fn restore(&mut self, snapshot: &Vec<Tensor>) -> Result<(), TrainError> {
        Ok(self.model.restore(snapshot)?)
    }

    fn save_checkpoint(&self, dir: &Path) -> Result<(), TrainError> {
        Ok(self.model.save(dir)?)
    }
}
