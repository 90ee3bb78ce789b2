//! Joint classify-then-explain network: shared encoder with a masked-LM
//! verbalizer head, a bridge, and an autoregressive explanation decoder.

pub mod joint;
pub mod networks;
pub mod nn;
pub mod template;
pub mod tokenizer;
pub mod verbalizer;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use joint::{
    ClassifierOutput, DecodeConfig, Explained, Generated, JointModel, JointOutput, Param, ParamGroup, PreparedInstance,
};
pub use nn::{ForwardCtx, LayerSelector, NoiseSpec};
pub use template::{render_classification_template, render_generation_template, TemplateInput};
pub use tokenizer::Tokenizer;
pub use verbalizer::{Aggregation, VerbalizerDecision, VerbalizerMap};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("verbalizer: {0}")]
    Verbalizer(String),
    #[error("model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("input needs {needed} tokens but the maximum length is {max_len}")]
    TooLong { needed: usize, max_len: usize },
    #[error("instance {id}: {source}")]
    Instance {
        id: String,
        #[source]
        source: Box<ModelError>,
    },
    #[error("expected shape {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },
    #[error("layer {index} does not exist; the encoder has {layers} layers")]
    InvalidLayer { index: usize, layers: usize },
    #[error("instance {0} has no gold label")]
    MissingLabel(String),
    #[error("instance {0} has no explanation; build the explanation dataset first")]
    MissingExplanation(String),
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn for_instance(self, id: &str) -> Self {
        Self::Instance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

/// What fills the label slot of the generation template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelWordMode {
    #[default]
    Connective,
    Relation,
}

/// Which label conditions generation during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherLabel {
    #[default]
    Gold,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> candle_core::DType {
        match self {
            Self::F32 => candle_core::DType::F32,
            Self::F64 => candle_core::DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub encoder_layers: usize,
    /// Encoder input length, template included.
    pub max_len: usize,
    pub bridge_layers: usize,
    pub decoder_hidden: usize,
    pub decoder_heads: usize,
    pub decoder_ffn: usize,
    pub decoder_layers: usize,
    /// Decoder length, start token included.
    pub max_target_len: usize,
    pub label_word: LabelWordMode,
    pub teacher_label: TeacherLabel,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            heads: 4,
            ffn: 256,
            encoder_layers: 2,
            max_len: 128,
            bridge_layers: 1,
            decoder_hidden: 64,
            decoder_heads: 4,
            decoder_ffn: 256,
            decoder_layers: 2,
            max_target_len: 64,
            label_word: LabelWordMode::Connective,
            teacher_label: TeacherLabel::Gold,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("encoder_layers", self.encoder_layers),
            ("decoder_hidden", self.decoder_hidden),
            ("decoder_heads", self.decoder_heads),
            ("decoder_ffn", self.decoder_ffn),
            ("decoder_layers", self.decoder_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(ModelError::Config("hidden must be divisible by heads".into()));
        }
        if !self.decoder_hidden.is_multiple_of(self.decoder_heads) {
            return Err(ModelError::Config("decoder_hidden must be divisible by decoder_heads".into()));
        }
        if self.max_target_len < 2 {
            return Err(ModelError::Config("max_target_len must be at least 2".into()));
        }
        Ok(())
    }
}
