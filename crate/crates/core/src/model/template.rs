//! Prompt templates for the classification and generation passes.

use std::ops::Range;

use super::tokenizer::{Tokenizer, BOS_ID, EOS_ID, MASK, MASK_ID, SEP};
use super::ModelError;

const QUESTION: &str = "The conjunction between Arg1 and Arg2 is";
const REASON: &str = ", the main reason is that.";

/// Scaffold text, so a vocabulary built from data always covers the templates.
pub const SCAFFOLD_TEXT: [&str; 4] = ["Arg1:.Arg2:.", QUESTION, REASON, "."];

pub fn render_classification_template(arg1: &str, arg2: &str) -> String {
    format!("Arg1:{arg1}.Arg2:{arg2}.{SEP}{SEP}{QUESTION} {MASK}.")
}

pub fn render_generation_template(arg1: &str, arg2: &str, label_word: &str) -> String {
    format!("Arg1:{arg1}.Arg2:{arg2}.{SEP}{SEP}{QUESTION} {label_word}{REASON}")
}

/// Arguments are rendered verbatim; special surface forms inside them are only flagged.
pub fn template_warnings(arg1: &str, arg2: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (name, text) in [("arg1", arg1), ("arg2", arg2)] {
        for special in [SEP, MASK, "<s>", "<pad>", "<unk>"] {
            if text.contains(special) {
                out.push(format!("{name} contains the special token {special}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot<'a> {
    /// Classification: the mask token.
    Mask,
    /// Generation: the label word's tokens.
    LabelWord(&'a [u32]),
}

/// A tokenized template wrapped in `<s> ... </s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateInput {
    pub ids: Vec<u32>,
    pub arg1: Range<usize>,
    pub arg2: Range<usize>,
    /// Position of the mask, or of the label word's first token.
    pub slot: usize,
    /// Argument tokens dropped to fit `max_len`.
    pub truncated: usize,
}

impl TemplateInput {
    pub fn argument_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.arg1.clone().chain(self.arg2.clone())
    }
}

/// Kept lengths when `n1 + n2` tokens must fit in `avail`; tails are cut proportionally.
pub fn proportional_keep(n1: usize, n2: usize, avail: usize) -> (usize, usize) {
    if n1 + n2 <= avail {
        return (n1, n2);
    }
    let k1 = ((avail as f64) * (n1 as f64) / ((n1 + n2) as f64)).round() as usize;
    let k1 = k1.clamp(avail.saturating_sub(n2).max(1), n1.min(avail.saturating_sub(1)));
    (k1, avail - k1)
}

pub fn build_input(
    tok: &Tokenizer,
    arg1: &[u32],
    arg2: &[u32],
    slot: Slot<'_>,
    max_len: usize,
) -> Result<TemplateInput, ModelError> {
    let head = tok.encode("Arg1:");
    let mid = tok.encode(".Arg2:");
    let mut after_args = tok.encode(".");
    after_args.extend([EOS_ID, EOS_ID]);
    after_args.extend(tok.encode(QUESTION));
    let (slot_ids, tail) = match slot {
        Slot::Mask => (vec![MASK_ID], tok.encode(".")),
        Slot::LabelWord(w) => (w.to_vec(), tok.encode(REASON)),
    };
    let scaffold = 2 + head.len() + mid.len() + after_args.len() + slot_ids.len() + tail.len();
    let avail = max_len.saturating_sub(scaffold);
    if avail < 2 || arg1.is_empty() || arg2.is_empty() {
        return Err(ModelError::TooLong {
            needed: scaffold + 2,
            max_len,
        });
    }
    let (k1, k2) = proportional_keep(arg1.len(), arg2.len(), avail);

    let mut ids = Vec::with_capacity(scaffold + k1 + k2);
    ids.push(BOS_ID);
    ids.extend(&head);
    let a1 = ids.len()..ids.len() + k1;
    ids.extend(&arg1[..k1]);
    ids.extend(&mid);
    let a2 = ids.len()..ids.len() + k2;
    ids.extend(&arg2[..k2]);
    ids.extend(&after_args);
    let slot = ids.len();
    ids.extend(&slot_ids);
    ids.extend(&tail);
    ids.push(EOS_ID);
    Ok(TemplateInput {
        ids,
        arg1: a1,
        arg2: a2,
        slot,
        truncated: arg1.len() + arg2.len() - k1 - k2,
    })
}
