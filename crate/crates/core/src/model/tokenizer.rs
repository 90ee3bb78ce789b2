//! Word-level tokenizer with a vocabulary built from data.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::ModelError;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const SEP: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

const SPECIALS: [&str; 5] = [PAD, BOS, SEP, UNK, MASK];

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<s>|</s>|<pad>|<mask>|<unk>|\w+|[^\w\s]").unwrap())
}

/// Splits text into word and punctuation pieces; special surface forms stay whole.
pub fn pieces(text: &str) -> impl Iterator<Item = &str> {
    token_pattern().find_iter(text).map(|m| m.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Tokenizer {
    /// Specials first, then every piece of `texts` in first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tok = Self::from_tokens(SPECIALS.iter().map(|s| s.to_string())).expect("specials are unique");
        for text in texts {
            for p in pieces(text) {
                if !tok.ids.contains_key(p) {
                    tok.ids.insert(p.to_string(), tok.tokens.len() as u32);
                    tok.tokens.push(p.to_string());
                }
            }
        }
        tok
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self, ModelError> {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(ModelError::Vocab(format!("duplicate token {t:?}")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(ModelError::Vocab(format!("token {i} must be {s}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        pieces(text).map(|p| self.id(p).unwrap_or(UNK_ID)).collect()
    }

    /// Joins pieces with spaces, except around punctuation that attaches.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut glue_next = false;
        for &id in ids {
            if id == PAD_ID || id == BOS_ID || id == EOS_ID {
                continue;
            }
            let t = self.token(id);
            let attach_left = matches!(t, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "%" | "'");
            if !out.is_empty() && !attach_left && !glue_next {
                out.push(' ');
            }
            out.push_str(t);
            glue_next = matches!(t, "(" | "[" | "'" | "$");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_string))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_have_fixed_ids() {
        let t = Tokenizer::build(["hello world"]);
        assert_eq!(t.id(MASK), Some(MASK_ID));
        assert_eq!(t.id(SEP), Some(EOS_ID));
        assert_eq!(t.len(), 7);
    }

    #[test]
    fn pieces_keep_specials_whole() {
        let p: Vec<_> = pieces("Arg1:A.</s></s>is <mask>.").collect();
        assert_eq!(p, ["Arg1", ":", "A", ".", "</s>", "</s>", "is", "<mask>", "."]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let t = Tokenizer::build(["a b"]);
        assert_eq!(t.encode("a zzz"), vec![t.id("a").unwrap(), UNK_ID]);
    }

    #[test]
    fn decode_attaches_punctuation() {
        let t = Tokenizer::build(["The market fell 1.8%, then rose."]);
        let ids = t.encode("The market fell 1.8%, then rose.");
        assert_eq!(t.decode(&ids), "The market fell 1. 8%, then rose.");
    }

    #[test]
    fn vocab_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tokenizer::build(["some words here"]);
        let p = dir.path().join("vocab.txt");
        t.save(&p).unwrap();
        assert_eq!(Tokenizer::load(&p).unwrap(), t);
    }
}
