//! Rule-based label/explanation consistency.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;

use super::DistillError;
use crate::corpus::{Explanation, RelationLabel};

const DEFAULT_LEXICON: &str = include_str!("../../assets/cue_lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone)]
struct Cue {
    phrase: String,
    pattern: Regex,
}

/// Relation → cue phrases. Every relation has at least one cue.
#[derive(Debug, Clone)]
pub struct CueLexicon {
    cues: BTreeMap<RelationLabel, Vec<Cue>>,
}

impl Default for CueLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }
}

impl CueLexicon {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (RelationLabel, S)>) -> Result<Self, DistillError> {
        let mut cues: BTreeMap<RelationLabel, Vec<Cue>> = BTreeMap::new();
        for (label, phrase) in entries {
            let phrase = phrase.as_ref().trim().to_lowercase();
            if phrase.is_empty() {
                continue;
            }
            let body = phrase
                .split_whitespace()
                .map(regex::escape)
                .collect::<Vec<_>>()
                .join(r"\s+");
            let pattern = Regex::new(&format!(r"(?i)\b{body}\b")).expect("cue regex");
            cues.entry(label).or_default().push(Cue { phrase, pattern });
        }
        for label in RelationLabel::ALL {
            if cues.get(&label).is_none_or(|c| c.is_empty()) {
                return Err(DistillError::LexiconGap(label));
            }
        }
        Ok(Self { cues })
    }

    /// Parses `Relation<TAB>cue` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, DistillError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (rel, cue) = line.split_once('\t').ok_or_else(|| DistillError::BadLexiconLine {
                line: i + 1,
                message: "expected `Relation<TAB>cue`".into(),
            })?;
            let label = rel.parse::<RelationLabel>().map_err(|e| DistillError::BadLexiconLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((label, cue.to_string()));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let text = std::fs::read_to_string(path).map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn cues(&self, label: RelationLabel) -> impl Iterator<Item = &str> {
        self.cues[&label].iter().map(|c| c.phrase.as_str())
    }

    fn has_cue(&self, label: RelationLabel, text: &str) -> bool {
        self.cues[&label].iter().any(|c| c.pattern.is_match(text))
    }

    /// Cues listed for another relation but not for `label`.
    fn foreign_cue_present(&self, label: RelationLabel, text: &str) -> bool {
        let own = &self.cues[&label];
        self.cues
            .iter()
            .filter(|(l, _)| **l != label)
            .flat_map(|(_, cues)| cues)
            .filter(|c| !own.iter().any(|o| o.phrase == c.phrase))
            .any(|c| c.pattern.is_match(text))
    }

    /// Consistent iff the text carries a cue of `label` and no cue unique to another relation.
    pub fn check_text(&self, text: &str, label: RelationLabel) -> Consistency {
        if self.has_cue(label, text) && !self.foreign_cue_present(label, text) {
            Consistency::Consistent
        } else {
            Consistency::Inconsistent
        }
    }
}

/// Checks the rationale part of `expl` against `label`.
pub fn check_consistency(expl: &Explanation, label: RelationLabel, lexicon: &CueLexicon) -> Consistency {
    lexicon.check_text(expl.rationale(), label)
}
