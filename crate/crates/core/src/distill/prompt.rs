//! Label-conditioned in-context prompts for the teacher LLM.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DistillError;
use crate::corpus::{read_jsonl_records, DiscourseInstance, RelationLabel};

const DEFAULT_INSTRUCTIONS: &str = include_str!("../../assets/instructions.txt");
const DEFAULT_EXAMPLES: &str = include_str!("../../assets/in_context_examples.jsonl");

/// A worked example shown to the LLM before the query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextExample {
    pub arg1: String,
    pub arg2: String,
    pub label: RelationLabel,
    pub explanation: String,
}

impl InContextExample {
    /// The two handcrafted examples shipped with the crate.
    pub fn defaults() -> Vec<InContextExample> {
        DEFAULT_EXAMPLES
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).expect("shipped examples parse"))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Vec<InContextExample>, DistillError> {
        Ok(read_jsonl_records(path)?.into_iter().map(|(_, e)| e).collect())
    }
}

/// The fixed parts of the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub instructions: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instructions: DEFAULT_INSTRUCTIONS.trim_end().to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let text = std::fs::read_to_string(path).map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            instructions: text.trim_end().to_string(),
        })
    }
}

/// Instructions, examples and the query, ready to render.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmPrompt {
    pub instructions: String,
    pub in_context_examples: Vec<(String, RelationLabel, String)>,
    pub query: String,
}

fn arguments_text(arg1: &str, arg2: &str, context: Option<&str>) -> String {
    let mut s = format!("Arg1: {arg1}\nArg2: {arg2}");
    if let Some(ctx) = context {
        s.push_str("\nContext: ");
        s.push_str(ctx);
    }
    s
}

impl LlmPrompt {
    pub fn new(
        inst: &DiscourseInstance,
        examples: &[InContextExample],
        template: &PromptTemplate,
    ) -> Result<Self, DistillError> {
        let label = inst.label.ok_or_else(|| DistillError::MissingLabel(inst.id.clone()))?;
        if examples.is_empty() {
            return Err(DistillError::NoExamples);
        }
        let in_context_examples = examples
            .iter()
            .map(|e| (arguments_text(&e.arg1, &e.arg2, None), e.label, e.explanation.clone()))
            .collect();
        let query = format!(
            "S:\n{}\nRelation: {}\nExplanation:",
            arguments_text(&inst.arg1, &inst.arg2, inst.context.as_deref()),
            label
        );
        Ok(Self {
            instructions: template.instructions.clone(),
            in_context_examples,
            query,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.instructions);
        out.push_str("\n\n");
        for (i, (args, label, expl)) in self.in_context_examples.iter().enumerate() {
            out.push_str(&format!(
                "### Example {}\nS:\n{args}\nRelation: {label}\nExplanation: {expl}\n\n",
                i + 1
            ));
        }
        out.push_str("### Input\n");
        out.push_str(&self.query);
        out
    }
}

/// Renders the full prompt text for one labelled instance.
///
/// A present `context` is appended after the arguments.
pub fn build_llm_prompt(
    inst: &DiscourseInstance,
    examples: &[InContextExample],
    template: &PromptTemplate,
) -> Result<String, DistillError> {
    Ok(LlmPrompt::new(inst, examples, template)?.render())
}
