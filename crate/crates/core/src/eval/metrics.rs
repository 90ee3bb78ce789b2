//! Accuracy and macro-averaged F1 over the four relations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::RelationLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Classes absent from both predictions and golds are left out.
    pub per_class_f1: BTreeMap<RelationLabel, f64>,
    pub n: usize,
}

fn check_lengths(preds: &[RelationLabel], golds: &[RelationLabel]) -> Result<(), EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn accuracy(preds: &[RelationLabel], golds: &[RelationLabel]) -> Result<f64, EvalError> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Macro-F1 and the per-class F1 it averages.
///
/// A class with no gold and no predicted instance is excluded from the mean;
/// any other 0/0 in precision, recall or F1 counts as 0.
pub fn macro_f1(
    preds: &[RelationLabel],
    golds: &[RelationLabel],
) -> Result<(f64, BTreeMap<RelationLabel, f64>), EvalError> {
    check_lengths(preds, golds)?;
    let mut per_class = BTreeMap::new();
    for label in RelationLabel::ALL {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &g) in preds.iter().zip(golds) {
            match (p == label, g == label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        if tp + fp + fn_ == 0 {
            continue;
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        per_class.insert(label, f1);
    }
    let macro_ = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((macro_, per_class))
}

pub fn metrics_report(preds: &[RelationLabel], golds: &[RelationLabel]) -> Result<MetricsReport, EvalError> {
    let accuracy = accuracy(preds, golds)?;
    let (macro_f1, per_class_f1) = macro_f1(preds, golds)?;
    Ok(MetricsReport {
        accuracy,
        macro_f1,
        per_class_f1,
        n: golds.len(),
    })
}
