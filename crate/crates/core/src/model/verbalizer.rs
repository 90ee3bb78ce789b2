//! Connective words and how their scores turn into relation scores.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::RelationLabel;

const DEFAULT_MAPPING: &str = include_str!("../../assets/verbalizer.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerbalizerMap {
    entries: Vec<(String, RelationLabel)>,
    pub aggregation: Aggregation,
}

impl Default for VerbalizerMap {
    fn default() -> Self {
        Self::parse(DEFAULT_MAPPING, Aggregation::Max).expect("shipped mapping is valid")
    }
}

/// Result of applying the verbalizer to one connective score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VerbalizerDecision {
    pub relation_scores: [f64; 4],
    pub predicted: RelationLabel,
    /// Index into the verbalizer entries.
    pub predicted_connective: usize,
}

impl VerbalizerMap {
    pub fn new(entries: Vec<(String, RelationLabel)>, aggregation: Aggregation) -> Result<Self, ModelError> {
        for (i, (c, _)) in entries.iter().enumerate() {
            if c.trim().is_empty() {
                return Err(ModelError::Verbalizer("empty connective".into()));
            }
            if entries[..i].iter().any(|(d, _)| d == c) {
                return Err(ModelError::Verbalizer(format!("connective {c:?} listed twice")));
            }
        }
        for label in RelationLabel::ALL {
            if !entries.iter().any(|(_, l)| *l == label) {
                return Err(ModelError::Verbalizer(format!("no connective maps to {label}")));
            }
        }
        Ok(Self { entries, aggregation })
    }

    /// Parses `connective<TAB>Relation` lines; `#` starts a comment line.
    pub fn parse(text: &str, aggregation: Aggregation) -> Result<Self, ModelError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (conn, rel) = line
                .split_once('\t')
                .ok_or_else(|| ModelError::Verbalizer(format!("line {}: expected `connective<TAB>Relation`", i + 1)))?;
            let label = rel
                .trim()
                .parse::<RelationLabel>()
                .map_err(|e| ModelError::Verbalizer(format!("line {}: {e}", i + 1)))?;
            entries.push((conn.trim().to_string(), label));
        }
        Self::new(entries, aggregation)
    }

    pub fn load(path: &Path, aggregation: Aggregation) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::parse(&text, aggregation)
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|(c, l)| format!("{c}\t{l}\n")).collect()
    }

    pub fn entries(&self) -> &[(String, RelationLabel)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn connective(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn relation_of(&self, connective: &str) -> Option<RelationLabel> {
        self.entries.iter().find(|(c, _)| c == connective).map(|(_, l)| *l)
    }

    /// The first listed connective of `label`.
    pub fn canonical_connective(&self, label: RelationLabel) -> &str {
        self.entries
            .iter()
            .find(|(_, l)| *l == label)
            .map(|(c, _)| c.as_str())
            .expect("every relation has a connective")
    }

    /// Entry indices grouped by relation, in relation order.
    pub fn groups(&self) -> [Vec<usize>; 4] {
        let mut g: [Vec<usize>; 4] = Default::default();
        for (i, (_, l)) in self.entries.iter().enumerate() {
            g[l.index()].push(i);
        }
        g
    }

    pub fn relation_scores(&self, connective_scores: &[f64]) -> [f64; 4] {
        assert_eq!(connective_scores.len(), self.entries.len(), "one score per connective");
        let mut out = [0.0; 4];
        for (label, idx) in self.groups().iter().enumerate() {
            let vals = idx.iter().map(|&i| connective_scores[i]);
            out[label] = match self.aggregation {
                Aggregation::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                Aggregation::Sum => vals.sum(),
            };
        }
        out
    }

    /// Argmax over relations, ties to the earliest relation; then the best connective within it.
    pub fn decide(&self, connective_scores: &[f64]) -> VerbalizerDecision {
        let relation_scores = self.relation_scores(connective_scores);
        let mut best = 0;
        for i in 1..4 {
            if relation_scores[i] > relation_scores[best] {
                best = i;
            }
        }
        let predicted = RelationLabel::from_index(best).unwrap();
        let mut predicted_connective = usize::MAX;
        for (i, (_, l)) in self.entries.iter().enumerate() {
            if *l == predicted
                && (predicted_connective == usize::MAX || connective_scores[i] > connective_scores[predicted_connective])
            {
                predicted_connective = i;
            }
        }
        VerbalizerDecision {
            relation_scores,
            predicted,
            predicted_connective,
        }
    }
}
