//! Building the explanation-enhanced dataset with a teacher LLM.

pub mod client;
pub mod lexicon;
pub mod parse;
pub mod pipeline;
pub mod prompt;

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::{CorpusError, RelationLabel};

pub use client::{ClientError, LlmClient, ReplayClient, ReplayEntry, API_KEY_ENV};
pub use lexicon::{check_consistency, Consistency, CueLexicon};
pub use parse::{parse_explanation, ParseError, SplitMarkers};
pub use pipeline::{
    generate_dataset, merge_reviewed, DistillSettings, GenerationOutcome, GenerationReport, OutcomeRecord,
    OutcomeStatus, RetryPolicy, ReviewItem,
};
pub use prompt::{build_llm_prompt, InContextExample, LlmPrompt, PromptTemplate};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("instance {0} has no gold label; explanations are label-conditioned")]
    MissingLabel(String),
    #[error("at least one in-context example is required")]
    NoExamples,
    #[error("at least one LLM client is required")]
    NoClients,
    #[error("cue lexicon has no entry for {0}")]
    LexiconGap(RelationLabel),
    #[error("cue lexicon line {line}: {message}")]
    BadLexiconLine { line: usize, message: String },
    #[error("environment variable {} is not set", API_KEY_ENV)]
    MissingApiKey,
    #[error("fatal client error on instance {id}: {message}")]
    Fatal { id: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
