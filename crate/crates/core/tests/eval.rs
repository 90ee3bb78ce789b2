mod common;

use explain_distill::corpus::RelationLabel::{self, *};
use explain_distill::distill::{CueLexicon, SplitMarkers};
use explain_distill::eval::faithfulness::{occluded_count, top_k};
use explain_distill::eval::{
    aggregate_human_scores, consistency_rate, metrics_report, occlusion_eval, occlusion_table, read_human_scores,
    robustness_sweep, AttributionMethod, EvalError, ExplainingClassifier, FaithfulnessReport, FaithfulnessSettings,
    HumanScore, JointExplainer, OcclusionMode, Selection, Task,
};
use explain_distill::model::{DecodeConfig, LayerSelector};
use proptest::prelude::*;

use common::*;

fn label() -> impl Strategy<Value = RelationLabel> {
    (0usize..4).prop_map(|i| RelationLabel::from_index(i).unwrap())
}

#[test]
fn metrics_on_a_small_example() {
    let golds = [Temporal, Temporal, Comparison, Comparison];
    let preds = [Temporal, Comparison, Comparison, Comparison];
    let r = metrics_report(&preds, &golds).unwrap();
    assert_eq!(r.accuracy, 0.75);
    // Temporal: p=1 r=.5 f=2/3; Comparison: p=2/3 r=1 f=.8
    let expected = (2.0 / 3.0 + 0.8) / 2.0;
    assert!((r.macro_f1 - expected).abs() < 1e-12);
    assert_eq!(r.per_class_f1.len(), 2);
    assert_eq!(r.n, 4);
}

#[test]
fn metrics_reject_bad_input() {
    assert!(matches!(metrics_report(&[], &[]), Err(EvalError::Empty)));
    assert!(matches!(
        metrics_report(&[Temporal], &[Temporal, Expansion]),
        Err(EvalError::LengthMismatch { left: 1, right: 2 })
    ));
}

proptest! {
    #[test]
    fn metrics_match_the_confusion_matrix(pairs in prop::collection::vec((label(), label()), 1..60)) {
        let (preds, golds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let r = metrics_report(&preds, &golds).unwrap();
        let (f1, per) = confusion_macro_f1(&preds, &golds);
        prop_assert!((r.macro_f1 - f1).abs() < 1e-12);
        prop_assert_eq!(r.per_class_f1.keys().collect::<Vec<_>>(), per.keys().collect::<Vec<_>>());
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
        prop_assert!((0.0..=1.0).contains(&r.macro_f1));
    }
}

fn score(total: u8) -> HumanScore {
    let i = total.min(2);
    let f = (total - i).min(2);
    HumanScore::new(i, f, total - i - f).unwrap()
}

#[test]
fn human_scores_average_the_closest_pair() {
    let rows = vec![
        ("a".to_string(), vec![score(4), score(5)]),
        ("b".to_string(), vec![score(0), score(5), score(4)]),
        ("c".to_string(), vec![score(2), score(2)]),
    ];
    let agg = aggregate_human_scores(&rows).unwrap();
    let finals: Vec<f64> = agg.finals.iter().map(|(_, v)| *v).collect();
    assert_eq!(finals, vec![4.5, 4.5, 2.0]);
    assert!((agg.mean - 11.0 / 3.0).abs() < 1e-12);
}

#[test]
fn wide_disagreement_needs_a_third_annotator() {
    let rows = vec![("far".to_string(), vec![score(0), score(5)])];
    let err = aggregate_human_scores(&rows).unwrap_err();
    assert!(matches!(err, EvalError::NeedsThirdAnnotator { ref id, .. } if id == "far"), "{err}");
    let lone = vec![("lone".to_string(), vec![score(3)])];
    assert!(matches!(
        aggregate_human_scores(&lone),
        Err(EvalError::TooFewAnnotators { count: 1, .. })
    ));
    assert!(HumanScore::new(3, 0, 0).is_err());
    assert!(HumanScore::new(0, 0, 2).is_err());
}

proptest! {
    #[test]
    fn human_aggregate_ignores_annotator_order(totals in prop::collection::vec(0u8..=5, 3..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = totals.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate_human_scores(&[("x".into(), totals.iter().map(|&t| score(t)).collect())]).unwrap();
        let b = aggregate_human_scores(&[("x".into(), shuffled.iter().map(|&t| score(t)).collect())]).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert!((0.0..=5.0).contains(&a.mean));
    }
}

#[test]
fn human_scores_load_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    std::fs::write(
        &path,
        "instance_id,annotator_id,interpretability,factuality,fluency\n\
         p1,ann1,2,2,1\np2,ann1,1,1,0\np1,ann2,2,1,1\np2,ann2,1,0,0\n",
    )
    .unwrap();
    let rows = read_human_scores(&path).unwrap();
    assert_eq!(rows.iter().map(|(id, s)| (id.as_str(), s.len())).collect::<Vec<_>>(), vec![("p1", 2), ("p2", 2)]);
    let agg = aggregate_human_scores(&rows).unwrap();
    assert_eq!(agg.mean, (4.5 + 1.5) / 2.0);

    std::fs::write(&path, "instance_id,annotator_id,interpretability,factuality,fluency\np1,a,3,0,0\n").unwrap();
    assert!(matches!(read_human_scores(&path), Err(EvalError::InvalidScore(_))));
}

#[test]
fn consistency_rate_on_hand_written_rationales() {
    let texts = [
        "The first sentence says the bakery opened at dawn. The second sentence says the bread sold out by noon. The temporal relationship holds since selling out happened after opening.",
        "The first sentence reports wheat prices rose. The second sentence reports corn prices fell. This contrast between the two crops is the point.",
        "The first sentence says the road was icy. The second sentence says two cars slid off it. Therefore the ice is the cause of the accidents.",
        "The first sentence says the museum added a new wing. The second sentence lists the rooms inside it. Thus the second sentence gives more detail about the wing.",
    ];
    let labels = RelationLabel::ALL;
    let lex = CueLexicon::default();
    let markers = SplitMarkers::default();
    assert_eq!(consistency_rate(&texts, &labels, &lex, &markers).unwrap(), 1.0);
    // rotate the labels: no rationale matches its new label
    let rotated = [labels[1], labels[2], labels[3], labels[0]];
    assert_eq!(consistency_rate(&texts, &rotated, &lex, &markers).unwrap(), 0.0);
    // a one-sentence answer cannot be split and counts as inconsistent
    let one = ["The temporal relationship is clear."];
    assert_eq!(consistency_rate(&one, &[Temporal], &lex, &markers).unwrap(), 0.0);
}

#[test]
fn attribution_covers_every_argument_token() {
    let data = synthetic_corpus(2, 3);
    let model = tiny_model(&data, tiny_config(16), 5);
    let explainer = JointExplainer {
        model: &model,
        decode: DecodeConfig {
            max_new_tokens: 6,
            beam_width: 1,
        },
        method: AttributionMethod::GradientTimesInput,
    };
    for inst in &data[..3] {
        let args = explainer.argument_tokens(inst);
        for task in [Task::Classification, Task::Generation] {
            let s = explainer.attribute(&args, task).unwrap();
            assert_eq!(s.len(), args.len());
            assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0), "{s:?}");
            assert!(s.iter().any(|v| *v > 0.0));
        }
    }
    let silent = JointExplainer {
        decode: DecodeConfig {
            max_new_tokens: 0,
            beam_width: 1,
        },
        ..explainer
    };
    let args = silent.argument_tokens(&data[0]);
    assert!(matches!(silent.attribute(&args, Task::Generation), Err(EvalError::EmptyExplanation)));
}

#[test]
fn zero_fraction_reproduces_the_baseline() {
    let data = decisive_corpus(10, 1);
    let model = DecisiveModel::default();
    let settings = FaithfulnessSettings::default();
    let (acc, con) = explain_distill::eval::faithfulness::baseline(&model, &data, &settings).unwrap();
    for selection in [Selection::Important, Selection::Random] {
        let a = occlusion_eval(&model, &data, 0.0, selection, Task::Generation, Task::Classification, &settings).unwrap();
        let c = occlusion_eval(&model, &data, 0.0, selection, Task::Classification, Task::Generation, &settings).unwrap();
        assert_eq!(a, acc);
        assert_eq!(c, con);
    }
    assert_eq!(acc, 1.0);
}

#[test]
fn fractions_outside_range_are_rejected() {
    let data = decisive_corpus(1, 1);
    let settings = FaithfulnessSettings::default();
    for f in [-0.1, 1.0, 1.5, f64::NAN] {
        let r = occlusion_eval(&DecisiveModel::default(), &data, f, Selection::Random, Task::Generation, Task::Classification, &settings);
        assert!(matches!(r, Err(EvalError::InvalidFraction(_))), "{f}");
    }
}

#[test]
fn random_occlusion_matches_the_hit_probability() {
    // the key token is hit with probability k/n; a hit falls back to the first
    // relation, which is right for a quarter of the data
    let data = decisive_corpus(200, 9);
    let settings = FaithfulnessSettings::default();
    let n = 2 * ARG_LEN;
    for f in [0.1, 0.3, 0.5] {
        let k = occluded_count(f, n);
        let expected = 1.0 - (k as f64 / n as f64) * 0.75;
        let got = occlusion_eval(&DecisiveModel::default(), &data, f, Selection::Random, Task::Generation, Task::Classification, &settings)
            .unwrap();
        assert!((got - expected).abs() < 0.05, "f={f}: {got} vs {expected}");
    }
}

#[test]
fn important_occlusion_removes_the_decisive_token() {
    let data = decisive_corpus(20, 2);
    let settings = FaithfulnessSettings::default();
    let acc = occlusion_eval(
        &DecisiveModel::default(),
        &data,
        0.05,
        Selection::Important,
        Task::Classification,
        Task::Classification,
        &settings,
    )
    .unwrap();
    assert_eq!(acc, 0.25);
}

#[test]
fn delete_mode_matches_mask_mode_for_the_decisive_model() {
    let data = decisive_corpus(20, 4);
    let mask = FaithfulnessSettings::default();
    let delete = FaithfulnessSettings {
        mode: OcclusionMode::Delete,
        ..FaithfulnessSettings::default()
    };
    let m = DecisiveModel::default();
    for sel in [Selection::Important, Selection::Random] {
        let a = occlusion_eval(&m, &data, 0.3, sel, Task::Classification, Task::Classification, &mask).unwrap();
        let b = occlusion_eval(&m, &data, 0.3, sel, Task::Classification, Task::Classification, &delete).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn top_k_is_ordered_and_stable() {
    assert_eq!(top_k(&[0.1, 0.5, 0.5, 0.2], 3), vec![1, 2, 3]);
    assert_eq!(top_k(&[1.0], 4), vec![0]);
}

proptest! {
    #[test]
    fn occluded_count_is_the_ceiling(f in 0.0f64..0.99, n in 1usize..200) {
        let k = occluded_count(f, n);
        prop_assert!(k as f64 >= f * n as f64 - 1e-9);
        prop_assert!((k as f64) < f * n as f64 + 1.0);
        prop_assert!(k <= n);
    }
}

#[test]
fn occlusion_table_has_twelve_cells_and_writes_csv() {
    let data = decisive_corpus(5, 6);
    let settings = FaithfulnessSettings::default();
    let model = DecisiveModel::default();
    let cells = occlusion_table(&model, &data, &[0.1, 0.2, 0.3], &settings).unwrap();
    assert_eq!(cells.len(), 12);
    let distinct: std::collections::BTreeSet<_> = cells
        .iter()
        .map(|c| (c.fraction.to_bits(), c.selection, c.source_task, c.measured_task))
        .collect();
    assert_eq!(distinct.len(), 12);
    assert!(cells.iter().all(|c| (0.0..=1.0).contains(&c.value)));

    let sweep = robustness_sweep(&model, &data, &[0.0, 1.0], LayerSelector::Final, 3, 2, &settings).unwrap();
    let (acc, con) = explain_distill::eval::faithfulness::baseline(&model, &data, &settings).unwrap();
    let report = FaithfulnessReport {
        baseline_accuracy: acc,
        baseline_consistency: con,
        occlusion: cells,
        noise_sweep: sweep,
    };
    let dir = tempfile::tempdir().unwrap();
    report.write_tables(dir.path()).unwrap();
    let occ = std::fs::read_to_string(dir.path().join("occlusion.csv")).unwrap();
    assert_eq!(occ.lines().count(), 13);
    assert!(occ.starts_with("fraction,selection,source_task,measured_task,value"));
    let noise = std::fs::read_to_string(dir.path().join("noise_sweep.csv")).unwrap();
    assert_eq!(noise.lines().count(), 3);
}

#[test]
fn noise_sweep_validates_input() {
    let data = decisive_corpus(2, 0);
    let settings = FaithfulnessSettings::default();
    let m = DecisiveModel::default();
    for bad in [vec![-1.0], vec![f64::NAN], vec![1.0, 0.5]] {
        let r = robustness_sweep(&m, &data, &bad, LayerSelector::Final, 0, 1, &settings);
        assert!(matches!(r, Err(EvalError::InvalidNoise(_))), "{bad:?}");
    }

    let corpus = synthetic_corpus(1, 0);
    let model = tiny_model(&corpus, tiny_config(16), 0);
    let joint = JointExplainer {
        model: &model,
        decode: DecodeConfig::default(),
        method: AttributionMethod::default(),
    };
    let r = robustness_sweep(&joint, &corpus, &[0.1], LayerSelector::Layer(7), 0, 1, &settings);
    assert!(r.is_err());
}

#[test]
fn zero_variance_equals_the_baseline_and_sweeps_are_seeded() {
    let data = decisive_corpus(10, 8);
    let settings = FaithfulnessSettings::default();
    let m = DecisiveModel::default();
    let (acc, con) = explain_distill::eval::faithfulness::baseline(&m, &data, &settings).unwrap();
    let a = robustness_sweep(&m, &data, &[0.0, 0.5, 4.0], LayerSelector::Final, 11, 3, &settings).unwrap();
    let b = robustness_sweep(&m, &data, &[0.0, 0.5, 4.0], LayerSelector::Final, 11, 3, &settings).unwrap();
    assert_eq!(a, b);
    assert_eq!((a[0].accuracy, a[0].consistency), (acc, con));
    assert_eq!(a[0].passes, data.len());
    assert_eq!(a[1].passes, 3 * data.len());
}
