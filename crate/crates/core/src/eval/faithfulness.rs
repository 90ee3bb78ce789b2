//! Occlusion and internal-noise protocols for explanation faithfulness.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attribution::{attribute, AttributionMethod, Task};
use super::EvalError;
use crate::corpus::{DiscourseInstance, RelationLabel};
use crate::distill::{check_consistency, parse_explanation, Consistency, CueLexicon, SplitMarkers};
use crate::model::tokenizer::MASK_ID;
use crate::model::{DecodeConfig, ForwardCtx, JointModel, LayerSelector, NoiseSpec};

/// Argument tokens of one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgTokens {
    pub arg1: Vec<u32>,
    pub arg2: Vec<u32>,
}

impl ArgTokens {
    pub fn len(&self) -> usize {
        self.arg1.len() + self.arg2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub label: RelationLabel,
    pub explanation: String,
}

/// A model that predicts a relation and explains it, seen through argument tokens.
pub trait ExplainingClassifier {
    fn mask_token(&self) -> u32;

    fn argument_tokens(&self, inst: &DiscourseInstance) -> ArgTokens;

    /// With `noise`, internal features are perturbed using `rng`.
    fn predict(&self, args: &ArgTokens, noise: Option<NoiseSpec>, rng: &mut ChaCha8Rng) -> Result<Prediction, EvalError>;

    /// Non-negative importance of each argument token (arg1 then arg2) for `task`.
    fn attribute(&self, args: &ArgTokens, task: Task) -> Result<Vec<f64>, EvalError>;

    fn check_noise_site(&self, _site: LayerSelector) -> Result<(), EvalError> {
        Ok(())
    }
}

/// [`JointModel`] under a fixed decoding and attribution setting.
pub struct JointExplainer<'a> {
    pub model: &'a JointModel,
    pub decode: DecodeConfig,
    pub method: AttributionMethod,
}

impl ExplainingClassifier for JointExplainer<'_> {
    fn mask_token(&self) -> u32 {
        MASK_ID
    }

    fn argument_tokens(&self, inst: &DiscourseInstance) -> ArgTokens {
        ArgTokens {
            arg1: self.model.arg_tokens(&inst.arg1),
            arg2: self.model.arg_tokens(&inst.arg2),
        }
    }

    fn predict(&self, args: &ArgTokens, noise: Option<NoiseSpec>, rng: &mut ChaCha8Rng) -> Result<Prediction, EvalError> {
        let mut ctx = match noise {
            Some(spec) => ForwardCtx::with_noise(spec, ChaCha8Rng::seed_from_u64(rng.random())),
            None => ForwardCtx::eval(),
        };
        let out = self.model.explain_tokens(&args.arg1, &args.arg2, &self.decode, &mut ctx)?;
        Ok(Prediction {
            label: out.classifier.predicted,
            explanation: out.generated.text,
        })
    }

    fn attribute(&self, args: &ArgTokens, task: Task) -> Result<Vec<f64>, EvalError> {
        let (input, res) = attribute(self.model, &args.arg1, &args.arg2, task, self.method, &self.decode)?;
        // tokens cut by truncation carry no attribution
        let mut out = vec![0.0; args.len()];
        for (j, pos) in input.arg1.clone().enumerate() {
            out[j] = res.scores[pos];
        }
        for (j, pos) in input.arg2.clone().enumerate() {
            out[args.arg1.len() + j] = res.scores[pos];
        }
        Ok(out)
    }

    fn check_noise_site(&self, site: LayerSelector) -> Result<(), EvalError> {
        Ok(self.model.encoder.check_selector(site)?)
    }
}

/// Whether a generated explanation agrees with `label`; unparseable text does not.
pub fn explanation_consistent(text: &str, label: RelationLabel, lexicon: &CueLexicon, markers: &SplitMarkers) -> bool {
    match parse_explanation(text, markers) {
        Ok(e) => check_consistency(&e, label, lexicon) == Consistency::Consistent,
        Err(_) => false,
    }
}

/// Fraction of explanations consistent with their labels.
pub fn consistency_rate<S: AsRef<str>>(
    explanations: &[S],
    labels: &[RelationLabel],
    lexicon: &CueLexicon,
    markers: &SplitMarkers,
) -> Result<f64, EvalError> {
    if explanations.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: explanations.len(),
            right: labels.len(),
        });
    }
    if explanations.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = explanations
        .iter()
        .zip(labels)
        .filter(|(e, l)| explanation_consistent(e.as_ref(), **l, lexicon, markers))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Important,
    Random,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Important => "important",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcclusionMode {
    /// Replace with the mask token; positions are preserved.
    #[default]
    Mask,
    /// Remove the tokens.
    Delete,
}

#[derive(Debug, Clone)]
pub struct FaithfulnessSettings {
    pub lexicon: CueLexicon,
    pub markers: SplitMarkers,
    pub mode: OcclusionMode,
    pub seed: u64,
}

impl Default for FaithfulnessSettings {
    fn default() -> Self {
        Self {
            lexicon: CueLexicon::default(),
            markers: SplitMarkers::default(),
            mode: OcclusionMode::Mask,
            seed: 0,
        }
    }
}

fn instance_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Number of tokens occluded at `fraction` of `n`: `ceil(fraction * n)`.
pub fn occluded_count(fraction: f64, n: usize) -> usize {
    // tolerance keeps products like 0.3 * 20 = 6.000000000000001 at 6
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn check_fraction(fraction: f64) -> Result<(), EvalError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    Ok(())
}

/// Indices of the `k` highest scores; ties go to the earlier position.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn occlude(args: &ArgTokens, positions: &[usize], mask: u32, mode: OcclusionMode) -> ArgTokens {
    let hit = |i: usize| positions.contains(&i);
    let n1 = args.arg1.len();
    let apply = |toks: &[u32], offset: usize| -> Vec<u32> {
        match mode {
            OcclusionMode::Mask => toks
                .iter()
                .enumerate()
                .map(|(j, &t)| if hit(offset + j) { mask } else { t })
                .collect(),
            OcclusionMode::Delete => {
                let kept: Vec<u32> = toks
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !hit(offset + j))
                    .map(|(_, &t)| t)
                    .collect();
                // an argument cannot be empty; a fully deleted one keeps a single mask
                if kept.is_empty() {
                    vec![mask]
                } else {
                    kept
                }
            }
        }
    };
    ArgTokens {
        arg1: apply(&args.arg1, 0),
        arg2: apply(&args.arg2, n1),
    }
}

fn measure(
    pred: &Prediction,
    gold: Option<RelationLabel>,
    task: Task,
    settings: &FaithfulnessSettings,
) -> f64 {
    let ok = match task {
        Task::Classification => Some(pred.label) == gold,
        Task::Generation => explanation_consistent(&pred.explanation, pred.label, &settings.lexicon, &settings.markers),
    };
    if ok {
        1.0
    } else {
        0.0
    }
}

/// Metric of `measured` after occluding `fraction` of each instance's argument tokens.
///
/// `Important` picks the tokens ranked highest by `source` attribution; `Random`
/// picks a uniform subset of the same size, seeded per instance. A fraction of 0
/// occludes nothing and reproduces the baseline.
pub fn occlusion_eval<M: ExplainingClassifier + ?Sized>(
    model: &M,
    data: &[DiscourseInstance],
    fraction: f64,
    selection: Selection,
    source: Task,
    measured: Task,
    settings: &FaithfulnessSettings,
) -> Result<f64, EvalError> {
    check_fraction(fraction)?;
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    let mut quiet = ChaCha8Rng::seed_from_u64(settings.seed);
    for (i, inst) in data.iter().enumerate() {
        if measured == Task::Classification && inst.label.is_none() {
            return Err(EvalError::MissingLabel(inst.id.clone()));
        }
        let args = model.argument_tokens(inst);
        let k = occluded_count(fraction, args.len()).min(args.len());
        let positions = if k == 0 {
            Vec::new()
        } else {
            match selection {
                Selection::Important => top_k(&model.attribute(&args, source)?, k),
                Selection::Random => {
                    let mut rng = instance_rng(settings.seed, 1, i);
                    rand::seq::index::sample(&mut rng, args.len(), k).into_vec()
                }
            }
        };
        let occluded = occlude(&args, &positions, model.mask_token(), settings.mode);
        let pred = model.predict(&occluded, None, &mut quiet)?;
        total += measure(&pred, inst.label, measured, settings);
    }
    Ok(total / data.len() as f64)
}

/// Unoccluded accuracy and consistency.
pub fn baseline<M: ExplainingClassifier + ?Sized>(
    model: &M,
    data: &[DiscourseInstance],
    settings: &FaithfulnessSettings,
) -> Result<(f64, f64), EvalError> {
    let p = robustness_point(model, data, 0.0, LayerSelector::Final, settings.seed, 1, settings)?;
    Ok((p.accuracy, p.consistency))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub sigma2: f64,
    pub accuracy: f64,
    pub consistency: f64,
    /// Noisy passes behind the two means.
    pub passes: usize,
}

fn robustness_point<M: ExplainingClassifier + ?Sized>(
    model: &M,
    data: &[DiscourseInstance],
    sigma2: f64,
    site: LayerSelector,
    seed: u64,
    repeats: usize,
    settings: &FaithfulnessSettings,
) -> Result<NoisePoint, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let noise = (sigma2 > 0.0).then_some(NoiseSpec { sigma2, site });
    let repeats = if noise.is_none() { 1 } else { repeats.max(1) };
    let stream = sigma2.to_bits();
    let mut acc = 0.0;
    let mut con = 0.0;
    for r in 0..repeats {
        for (i, inst) in data.iter().enumerate() {
            let gold = inst.label.ok_or_else(|| EvalError::MissingLabel(inst.id.clone()))?;
            let mut rng = instance_rng(seed ^ (r as u64).rotate_left(32), stream, i);
            let pred = model.predict(&model.argument_tokens(inst), noise, &mut rng)?;
            acc += measure(&pred, Some(gold), Task::Classification, settings);
            con += measure(&pred, Some(gold), Task::Generation, settings);
        }
    }
    let passes = repeats * data.len();
    Ok(NoisePoint {
        sigma2,
        accuracy: acc / passes as f64,
        consistency: con / passes as f64,
        passes,
    })
}

/// Accuracy and consistency under Gaussian noise of each variance at `site`.
///
/// Each forward pass draws its own noise; `repeats` passes are made per
/// instance. A variance of 0 injects nothing, so it reproduces the baseline exactly.
pub fn robustness_sweep<M: ExplainingClassifier + ?Sized>(
    model: &M,
    data: &[DiscourseInstance],
    sigma2_list: &[f64],
    site: LayerSelector,
    seed: u64,
    repeats: usize,
    settings: &FaithfulnessSettings,
) -> Result<Vec<NoisePoint>, EvalError> {
    if sigma2_list.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(EvalError::InvalidNoise("variances must be finite and non-negative".into()));
    }
    if sigma2_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(EvalError::InvalidNoise("variances must be sorted ascending".into()));
    }
    model.check_noise_site(site)?;
    sigma2_list
        .iter()
        .map(|&s| robustness_point(model, data, s, site, seed, repeats, settings))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionCell {
    pub fraction: f64,
    pub selection: Selection,
    pub source_task: Task,
    pub measured_task: Task,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub baseline_accuracy: f64,
    pub baseline_consistency: f64,
    pub occlusion: Vec<OcclusionCell>,
    pub noise_sweep: Vec<NoisePoint>,
}

/// Explanation-important features against classification, and the converse.
pub const PAIRINGS: [(Task, Task); 2] = [
    (Task::Generation, Task::Classification),
    (Task::Classification, Task::Generation),
];

/// Every (fraction, selection, pairing) cell.
pub fn occlusion_table<M: ExplainingClassifier + ?Sized>(
    model: &M,
    data: &[DiscourseInstance],
    fractions: &[f64],
    settings: &FaithfulnessSettings,
) -> Result<Vec<OcclusionCell>, EvalError> {
    let mut cells = Vec::new();
    for &(source, measured) in &PAIRINGS {
        for selection in [Selection::Important, Selection::Random] {
            for &fraction in fractions {
                let value = occlusion_eval(model, data, fraction, selection, source, measured, settings)?;
                cells.push(OcclusionCell {
                    fraction,
                    selection,
                    source_task: source,
                    measured_task: measured,
                    value,
                });
            }
        }
    }
    Ok(cells)
}

impl FaithfulnessReport {
    /// Writes `occlusion.csv` and `noise_sweep.csv` into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::Table(format!("{}: {e}", dir.display())))?;
        let table_err = |e: csv::Error| EvalError::Table(e.to_string());
        let mut w = csv::Writer::from_path(dir.join("occlusion.csv")).map_err(table_err)?;
        w.write_record(["fraction", "selection", "source_task", "measured_task", "value"])
            .map_err(table_err)?;
        for c in &self.occlusion {
            w.write_record([
                c.fraction.to_string(),
                c.selection.as_str().to_string(),
                c.source_task.as_str().to_string(),
                c.measured_task.as_str().to_string(),
                c.value.to_string(),
            ])
            .map_err(table_err)?;
        }
        w.flush().map_err(|e| EvalError::Table(e.to_string()))?;
        let mut w = csv::Writer::from_path(dir.join("noise_sweep.csv")).map_err(table_err)?;
        w.write_record(["sigma2", "accuracy", "con"]).map_err(table_err)?;
        for p in &self.noise_sweep {
            w.write_record([p.sigma2.to_string(), p.accuracy.to_string(), p.consistency.to_string()])
                .map_err(table_err)?;
        }
        w.flush().map_err(|e| EvalError::Table(e.to_string()))?;
        Ok(())
    }
}
