//! Predictive metrics, human-score aggregation and faithfulness protocols.

pub mod attribution;
pub mod faithfulness;
pub mod human;
pub mod metrics;

use thiserror::Error;

use crate::model::ModelError;

pub use attribution::{attribute, token_attribution, AttributionMethod, AttributionResult, Task};
pub use faithfulness::{
    consistency_rate, occlusion_eval, occlusion_table, robustness_sweep, ArgTokens, ExplainingClassifier,
    FaithfulnessReport, FaithfulnessSettings, JointExplainer, NoisePoint, OcclusionCell, OcclusionMode, Prediction,
    Selection,
};
pub use human::{aggregate_human_scores, read_human_scores, HumanAggregate, HumanScore};
pub use metrics::{accuracy, macro_f1, metrics_report, MetricsReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("occlusion fraction {0} is outside [0, 1)")]
    InvalidFraction(f64),
    #[error("noise sweep: {0}")]
    InvalidNoise(String),
    #[error("instance {0} has no gold label")]
    MissingLabel(String),
    #[error("the explanation to attribute is empty")]
    EmptyExplanation,
    #[error("attribution: {0}")]
    Attribution(String),
    #[error("invalid human score: {0}")]
    InvalidScore(String),
    #[error("instance {id} has {count} annotator score(s); at least two are needed")]
    TooFewAnnotators { id: String, count: usize },
    #[error("instance {id}: annotator totals {first} and {second} differ by more than 2 and no third score is given")]
    NeedsThirdAnnotator { id: String, first: u8, second: u8 },
    #[error("table: {0}")]
    Table(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}
