#![allow(dead_code)]

use std::collections::BTreeMap;

use explain_distill::corpus::{DiscourseInstance, Explanation, RelationLabel};
use explain_distill::eval::{ArgTokens, EvalError, ExplainingClassifier, Prediction, Task};
use explain_distill::model::{JointModel, LabelWordMode, ModelConfig, NoiseSpec, Precision, VerbalizerMap};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const WORDS: [&str; 24] = [
    "river", "market", "engine", "harbor", "ledger", "signal", "orchard", "tunnel", "cabinet", "meadow", "furnace",
    "lantern", "quarry", "saddle", "turbine", "violin", "glacier", "pepper", "canvas", "magnet", "summit", "harvest",
    "beacon", "cottage",
];

/// `per_class` instances of each relation; explanations are 20 tokens.
pub fn synthetic_corpus(per_class: usize, seed: u64) -> Vec<DiscourseInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in RelationLabel::ALL {
        for k in 0..per_class {
            let w: Vec<&str> = WORDS.choose_multiple(&mut rng, 4).copied().collect();
            let arg1 = format!("the {} met the {}", w[0], w[1]);
            let arg2 = format!("a {} near a {}", w[2], w[3]);
            let restatement = format!(
                "The first sentence mentions {} {}. The second sentence mentions {} {}.",
                w[0], w[1], w[2], w[3]
            );
            let rationale = format!("The {} relationship is evident.", label.as_str().to_lowercase());
            let id = format!("{}-{k}", label.as_str().to_lowercase());
            out.push(
                DiscourseInstance::new(id, arg1, arg2, Some(label))
                    .with_explanation(Explanation::new(restatement, rationale).unwrap()),
            );
        }
    }
    out
}

pub fn tiny_config(hidden: usize) -> ModelConfig {
    ModelConfig {
        hidden,
        heads: 4,
        ffn: hidden * 2,
        encoder_layers: 2,
        max_len: 64,
        bridge_layers: 1,
        decoder_hidden: hidden,
        decoder_heads: 4,
        decoder_ffn: hidden * 2,
        decoder_layers: 1,
        max_target_len: 32,
        label_word: LabelWordMode::Relation,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(data: &[DiscourseInstance], config: ModelConfig, seed: u64) -> JointModel {
    let verb = VerbalizerMap::default();
    let tok = JointModel::build_tokenizer(data, &verb);
    JointModel::new(config, tok, verb, seed).unwrap()
}

pub fn tiny_model_f64(data: &[DiscourseInstance], hidden: usize, seed: u64) -> JointModel {
    let config = ModelConfig {
        precision: Precision::F64,
        ..tiny_config(hidden)
    };
    tiny_model(data, config, seed)
}

// ---------------------------------------------------------------------------
// Synthetic classifier whose decision rests on a single known token.

pub const DECISIVE_MASK: u32 = 4;
/// Token `KEY_BASE + c` decides relation `c`.
pub const KEY_BASE: u32 = 10;
pub const FILLER: std::ops::Range<u32> = 20..40;
pub const ARG_LEN: usize = 10;

/// Hidden state is the sum of one-hot class votes of key tokens; the relation
/// is its argmax (ties to the first relation). The explanation names the argmax
/// of a second, independently perturbed pass nudged toward the prediction.
pub struct DecisiveModel {
    pub label_bias: f64,
}

impl Default for DecisiveModel {
    fn default() -> Self {
        Self { label_bias: 0.5 }
    }
}

fn argmax(v: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

impl DecisiveModel {
    fn hidden(args: &ArgTokens) -> [f64; 4] {
        let mut h = [0.0; 4];
        for &t in args.arg1.iter().chain(&args.arg2) {
            if (KEY_BASE..KEY_BASE + 4).contains(&t) {
                h[(t - KEY_BASE) as usize] += 1.0;
            }
        }
        h
    }

    fn perturbed(h: [f64; 4], noise: Option<NoiseSpec>, rng: &mut ChaCha8Rng) -> [f64; 4] {
        match noise {
            Some(n) if n.sigma2 > 0.0 => {
                let d = Normal::new(0.0, n.sigma2.sqrt()).unwrap();
                h.map(|x| x + d.sample(rng))
            }
            _ => h,
        }
    }
}

pub fn rationale_for(label: RelationLabel) -> String {
    format!(
        "The first sentence names a token. The second sentence names another. The {} relationship is evident.",
        label.as_str().to_lowercase()
    )
}

impl ExplainingClassifier for DecisiveModel {
    fn mask_token(&self) -> u32 {
        DECISIVE_MASK
    }

    fn argument_tokens(&self, inst: &DiscourseInstance) -> ArgTokens {
        let parse = |s: &str| s.split_whitespace().map(|t| t.parse::<u32>().unwrap()).collect();
        ArgTokens {
            arg1: parse(&inst.arg1),
            arg2: parse(&inst.arg2),
        }
    }

    fn predict(&self, args: &ArgTokens, noise: Option<NoiseSpec>, rng: &mut ChaCha8Rng) -> Result<Prediction, EvalError> {
        let h = Self::hidden(args);
        let pred = argmax(&Self::perturbed(h, noise, rng));
        let mut g = Self::perturbed(h, noise, rng);
        g[pred] += self.label_bias;
        Ok(Prediction {
            label: RelationLabel::from_index(pred).unwrap(),
            explanation: rationale_for(RelationLabel::from_index(argmax(&g)).unwrap()),
        })
    }

    fn attribute(&self, args: &ArgTokens, _task: Task) -> Result<Vec<f64>, EvalError> {
        // gradient of h[pred] w.r.t. a one-hot input, times the input
        let pred = argmax(&Self::hidden(args)) as u32;
        Ok(args
            .arg1
            .iter()
            .chain(&args.arg2)
            .map(|&t| if t == KEY_BASE + pred { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Balanced data: `per_class` instances per relation, one key token at a random position.
pub fn decisive_corpus(per_class: usize, seed: u64) -> Vec<DiscourseInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in RelationLabel::ALL {
        for k in 0..per_class {
            let mut toks: Vec<u32> = (0..2 * ARG_LEN).map(|_| rng.random_range(FILLER)).collect();
            let pos = rng.random_range(0..toks.len());
            toks[pos] = KEY_BASE + label.index() as u32;
            let join = |t: &[u32]| t.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            out.push(DiscourseInstance::new(
                format!("{}-{k}", label.as_str()),
                join(&toks[..ARG_LEN]),
                join(&toks[ARG_LEN..]),
                Some(label),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Oracles.

/// Macro-F1 from an explicit 4x4 confusion matrix.
pub fn confusion_macro_f1(preds: &[RelationLabel], golds: &[RelationLabel]) -> (f64, BTreeMap<RelationLabel, f64>) {
    let mut m = [[0u32; 4]; 4];
    for (p, g) in preds.iter().zip(golds) {
        m[g.index()][p.index()] += 1;
    }
    let mut per = BTreeMap::new();
    for (c, row) in m.iter().enumerate() {
        let tp = row[c] as f64;
        let pred_c: u32 = m.iter().map(|r| r[c]).sum();
        let gold_c: u32 = row.iter().sum();
        if pred_c == 0 && gold_c == 0 {
            continue;
        }
        let p = if pred_c == 0 { 0.0 } else { tp / pred_c as f64 };
        let r = if gold_c == 0 { 0.0 } else { tp / gold_c as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        per.insert(RelationLabel::from_index(c).unwrap(), f);
    }
    let macro_f1 = per.values().sum::<f64>() / per.len() as f64;
    (macro_f1, per)
}

/// Brute force over the mapping: best relation by aggregated score, ties to the first listed relation.
pub fn verbalizer_oracle(entries: &[(String, RelationLabel)], scores: &[f64], sum: bool) -> RelationLabel {
    let mut best: Option<(RelationLabel, f64)> = None;
    for label in RelationLabel::ALL {
        let mine: Vec<f64> = entries
            .iter()
            .zip(scores)
            .filter(|((_, l), _)| *l == label)
            .map(|(_, s)| *s)
            .collect();
        let agg = if sum {
            mine.iter().sum()
        } else {
            mine.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        match best {
            Some((_, b)) if agg <= b => {}
            _ => best = Some((label, agg)),
        }
    }
    best.unwrap().0
}

pub fn classification_template_oracle(a1: &str, a2: &str) -> String {
    let mut s = String::new();
    s += "Arg1:";
    s += a1;
    s += ".Arg2:";
    s += a2;
    s += ".";
    s += "</s></s>";
    s += "The conjunction between Arg1 and Arg2 is <mask>.";
    s
}

pub fn generation_template_oracle(a1: &str, a2: &str, word: &str) -> String {
    ["Arg1:", a1, ".Arg2:", a2, ".</s></s>The conjunction between Arg1 and Arg2 is ", word, ", the main reason is that."]
        .concat()
}

/// Mean and 95% half-width of a sample.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}
