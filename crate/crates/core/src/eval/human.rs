//! Aggregating rubric scores from several annotators.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One annotator's rubric for one explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    interpretability: u8,
    factuality: u8,
    fluency: u8,
}

impl HumanScore {
    pub fn new(interpretability: u8, factuality: u8, fluency: u8) -> Result<Self, EvalError> {
        for (name, v, max) in [
            ("interpretability", interpretability, 2),
            ("factuality", factuality, 2),
            ("fluency", fluency, 1),
        ] {
            if v > max {
                return Err(EvalError::InvalidScore(format!("{name}={v} exceeds {max}")));
            }
        }
        Ok(Self {
            interpretability,
            factuality,
            fluency,
        })
    }

    pub fn total(&self) -> u8 {
        self.interpretability + self.factuality + self.fluency
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanAggregate {
    /// Per instance, the mean of its two closest totals.
    pub finals: Vec<(String, f64)>,
    pub mean: f64,
}

/// Largest gap between two annotators that does not call for a third.
pub const MAX_PAIR_GAP: u8 = 2;

/// Mean of the two closest totals of one instance.
///
/// Totals are compared in ascending order, so on equal gaps the lower pair wins
/// whatever order the annotators are listed in.
pub fn closest_pair_mean(id: &str, scores: &[HumanScore]) -> Result<f64, EvalError> {
    if scores.len() < 2 {
        return Err(EvalError::TooFewAnnotators {
            id: id.to_string(),
            count: scores.len(),
        });
    }
    let mut totals: Vec<u8> = scores.iter().map(HumanScore::total).collect();
    if totals.len() == 2 && totals[0].abs_diff(totals[1]) > MAX_PAIR_GAP {
        return Err(EvalError::NeedsThirdAnnotator {
            id: id.to_string(),
            first: totals[0],
            second: totals[1],
        });
    }
    totals.sort_unstable();
    let (a, b) = totals
        .windows(2)
        .map(|w| (w[0], w[1]))
        .min_by_key(|(a, b)| b - a)
        .expect("at least two totals");
    Ok((a as f64 + b as f64) / 2.0)
}

pub fn aggregate_human_scores(per_instance: &[(String, Vec<HumanScore>)]) -> Result<HumanAggregate, EvalError> {
    if per_instance.is_empty() {
        return Err(EvalError::Empty);
    }
    let finals = per_instance
        .iter()
        .map(|(id, s)| Ok((id.clone(), closest_pair_mean(id, s)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mean = finals.iter().map(|(_, f)| f).sum::<f64>() / finals.len() as f64;
    Ok(HumanAggregate { finals, mean })
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    instance_id: String,
    #[allow(dead_code)]
    annotator_id: String,
    interpretability: u8,
    factuality: u8,
    fluency: u8,
}

/// Reads `instance_id,annotator_id,interpretability,factuality,fluency` rows,
/// grouped by instance in first-seen order.
pub fn read_human_scores(path: &Path) -> Result<Vec<(String, Vec<HumanScore>)>, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::Table(format!("{}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<HumanScore>> = HashMap::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| EvalError::Table(format!("{} row {}: {e}", path.display(), i + 2)))?;
        let score = HumanScore::new(row.interpretability, row.factuality, row.fluency)?;
        if !groups.contains_key(&row.instance_id) {
            order.push(row.instance_id.clone());
        }
        groups.entry(row.instance_id).or_default().push(score);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let s = groups.remove(&id).unwrap_or_default();
            (id, s)
        })
        .collect())
}
