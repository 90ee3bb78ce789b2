//! Gradient-based token attribution.

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{DecodeConfig, ForwardCtx, JointModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMethod {
    /// L2 norm of gradient times embedding, per token.
    #[default]
    GradientTimesInput,
    /// L2 norm of the gradient, per token.
    GradientNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Generation,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Generation => "generation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    /// One non-negative score per input token.
    pub scores: Vec<f64>,
    pub target: Task,
    pub method: AttributionMethod,
}

/// Per-row attribution of the scalar `f(embeddings)` to the rows of `embeddings` `[T, d]`.
pub fn token_attribution<F>(embeddings: &Tensor, method: AttributionMethod, f: F) -> Result<Vec<f64>, EvalError>
where
    F: FnOnce(&Tensor) -> Result<Tensor, EvalError>,
{
    let var = Var::from_tensor(&embeddings.detach())?;
    let out = f(var.as_tensor())?;
    if out.elem_count() != 1 {
        return Err(EvalError::Attribution(format!(
            "target must be a scalar, got shape {:?}",
            out.dims()
        )));
    }
    let grads = out.backward()?;
    let rows = embeddings.dim(0)?;
    let Some(g) = grads.get(&var) else {
        return Ok(vec![0.0; rows]);
    };
    let contrib = match method {
        AttributionMethod::GradientTimesInput => g.mul(var.as_tensor())?,
        AttributionMethod::GradientNorm => g.clone(),
    };
    let norms = contrib.sqr()?.sum(1)?.sqrt()?;
    Ok(norms.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?)
}

/// Attribution over the tokens of the classification input (`target = Classification`)
/// or of the generation input conditioned on the prediction (`target = Generation`).
///
/// The classification target is the log-score of the predicted relation; the
/// generation target is the mean log-likelihood of the greedy explanation.
pub fn attribute(
    model: &JointModel,
    arg1: &[u32],
    arg2: &[u32],
    target: Task,
    method: AttributionMethod,
    decode: &DecodeConfig,
) -> Result<(crate::model::TemplateInput, AttributionResult), EvalError> {
    let explained = model.explain_tokens(arg1, arg2, decode, &mut ForwardCtx::eval())?;
    let (input, scores) = match target {
        Task::Classification => {
            let input = model.classification_input(arg1, arg2)?;
            let emb = model.encoder.token_embeddings(&input.ids)?;
            let pred = explained.classifier.predicted.index();
            let scores = token_attribution(&emb, method, |e| {
                let clp = model.connective_logprobs(&input, e, &mut ForwardCtx::eval())?;
                Ok(model.relation_logscores(&clp)?.get(pred)?)
            })?;
            (input, scores)
        }
        Task::Generation => {
            if explained.generated.ids.is_empty() {
                return Err(EvalError::EmptyExplanation);
            }
            let input = model.generation_input(arg1, arg2, &explained.label_word)?;
            let emb = model.encoder.token_embeddings(&input.ids)?;
            let target_ids = explained.generated.ids.clone();
            let scores = token_attribution(&emb, method, |e| {
                let mut ctx = ForwardCtx::eval();
                let memory = model.memory(e, &mut ctx)?;
                Ok(model.score(&memory, &target_ids, &mut ctx)?.mean_all()?)
            })?;
            (input, scores)
        }
    };
    Ok((
        input,
        AttributionResult {
            scores,
            target,
            method,
        },
    ))
}
