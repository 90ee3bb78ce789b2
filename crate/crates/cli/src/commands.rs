use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use explain_distill::corpus::{load_dataset, save_dataset, DatasetFormat, DatasetSplit};
use explain_distill::distill::pipeline::save_review_queue;
use explain_distill::distill::{
    generate_dataset, CueLexicon, DistillError, DistillSettings, InContextExample, LlmClient, OutcomeStatus,
    PromptTemplate, ReplayClient, SplitMarkers,
};
use explain_distill::eval::faithfulness::baseline;
use explain_distill::eval::{
    consistency_rate, metrics_report, occlusion_table, robustness_sweep, EvalError, ExplainingClassifier,
    FaithfulnessReport, FaithfulnessSettings, JointExplainer, NoisePoint, OcclusionCell,
};
use explain_distill::model::{DecodeConfig, JointModel, LayerSelector, ModelError, VerbalizerMap};
use explain_distill::train::{two_stage_train, JointTrainer, MetricsLog, TrainError};
use serde::{Deserialize, Serialize};

use crate::chart::{LineChart, Series};
use crate::config::Config;
use crate::manifest::{ManifestHandle, RunManifest, MANIFEST_FILE};
use crate::{BuildArgs, Classify, EvalArgs, FaithArgs, Failure, Globals, ReportArgs, TrainArgs};

/// Runs `body` between a partial manifest and a finished one.
fn with_manifest(
    g: &Globals,
    command: &str,
    seeds: Vec<u64>,
    body: impl FnOnce(&mut ManifestHandle) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let mut m = ManifestHandle::start(&g.out, command, &g.config, seeds).config_err()?;
    match body(&mut m) {
        Ok(()) => m.finish().domain_err(),
        Err(f) => {
            if m.manifest.partial {
                m.fail(&crate::describe(f.error()));
            }
            Err(f)
        }
    }
}

fn load_split(path: &Path) -> Result<DatasetSplit, Failure> {
    load_dataset(path, DatasetFormat::from_path(path))
        .with_context(|| format!("loading {}", path.display()))
        .config_err()
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    path.ok_or_else(|| Failure::Config(anyhow!("no {what} given; pass a flag or set it in the config")))
}

fn nonempty(split: &DatasetSplit, path: &Path) -> Result<(), Failure> {
    if split.is_empty() {
        return Err(Failure::Config(anyhow!("dataset {} is empty", path.display())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// build-explanations

fn distill_settings(cfg: &Config) -> anyhow::Result<DistillSettings> {
    let d = &cfg.distill;
    let template = match &d.instructions {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    };
    let examples = match &d.examples {
        Some(p) => InContextExample::load(p)?,
        None => InContextExample::defaults(),
    };
    let lexicon = match &d.lexicon {
        Some(p) => CueLexicon::load(p)?,
        None => CueLexicon::default(),
    };
    let markers = match &d.markers {
        Some(m) => SplitMarkers::new(m.iter().map(String::as_str)),
        None => SplitMarkers::default(),
    };
    Ok(DistillSettings {
        template,
        examples,
        lexicon,
        markers,
        policy: d.policy.clone(),
    })
}

fn clients(cfg: &Config) -> Result<Vec<Box<dyn LlmClient>>, Failure> {
    if let Some(path) = &cfg.distill.replay {
        return Ok(vec![Box::new(ReplayClient::from_file(path).config_err()?)]);
    }
    if cfg.distill.remote.is_empty() {
        return Err(Failure::Config(anyhow!(
            "no LLM client configured; set distill.replay or add a [[distill.remote]] entry"
        )));
    }
    cfg.distill
        .remote
        .iter()
        .map(|r| {
            explain_distill::distill::client::HttpClient::from_env(r.clone())
                .map(|c| Box::new(c) as Box<dyn LlmClient>)
                .config_err()
        })
        .collect()
}

fn distill_failure(e: DistillError) -> Failure {
    match e {
        DistillError::Fatal { .. } | DistillError::Io { .. } | DistillError::Checkpoint(_) => Failure::Domain(e.into()),
        _ => Failure::Config(e.into()),
    }
}

pub fn build_explanations(mut g: Globals, a: BuildArgs) -> Result<(), Failure> {
    if a.input.is_some() {
        g.config.distill.input = a.input;
    }
    if a.replay.is_some() {
        g.config.distill.replay = a.replay;
    }
    let input = require(g.config.distill.input.clone(), "input dataset (--input)")?;
    let settings = distill_settings(&g.config).config_err()?;
    let clients = clients(&g.config)?;
    let split = load_split(&input)?;

    with_manifest(&g, "build-explanations", Vec::new(), |m| {
        let checkpoint = g.out.join("checkpoint.jsonl");
        let refs: Vec<&dyn LlmClient> = clients.iter().map(|c| c.as_ref()).collect();
        let report = generate_dataset(&split, &refs, &settings, Some(&checkpoint)).map_err(distill_failure)?;

        let enriched_path = g.out.join("enriched.jsonl");
        let review_path = g.out.join("review_queue.jsonl");
        save_dataset(&report.enriched, &enriched_path).domain_err()?;
        save_review_queue(&report.review_queue, &review_path).domain_err()?;
        m.output(&enriched_path);
        m.output(&review_path);
        m.output(&checkpoint);

        let cached = if report.cached > 0 {
            format!(" ({} cached)", report.cached)
        } else {
            String::new()
        };
        println!(
            "enriched={}{cached} refused={} unparseable={} inconsistent={} failed={}",
            report.fresh_count(OutcomeStatus::Ok),
            report.fresh_count(OutcomeStatus::Refused),
            report.fresh_count(OutcomeStatus::Unparseable),
            report.fresh_count(OutcomeStatus::Inconsistent),
            report.fresh_count(OutcomeStatus::Failed),
        );
        if !report.review_queue.is_empty() {
            println!("review queue: {} instance(s) in {}", report.review_queue.len(), review_path.display());
            if !a.allow_review {
                m.finish().domain_err()?;
                return Err(Failure::Domain(anyhow!(
                    "{} instance(s) need review; rerun with --allow-review to accept",
                    report.review_queue.len()
                )));
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// train

fn verbalizer(cfg: &Config) -> anyhow::Result<VerbalizerMap> {
    let v = &cfg.verbalizer;
    Ok(match &v.path {
        Some(p) => VerbalizerMap::load(p, v.aggregation)?,
        None => VerbalizerMap::new(VerbalizerMap::default().entries().to_vec(), v.aggregation)?,
    })
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::InvalidConfig { .. } | TrainError::EmptyDataset(_) | TrainError::Model(ModelError::Config(_)) => {
            Failure::Config(e.into())
        }
        _ => Failure::Domain(e.into()),
    }
}

#[derive(Serialize)]
struct SeedRow {
    seed: u64,
    accuracy: f64,
    macro_f1: f64,
    checkpoint: String,
}

pub fn train(mut g: Globals, a: TrainArgs) -> Result<(), Failure> {
    if a.train.is_some() {
        g.config.data.train = a.train;
    }
    if a.validation.is_some() {
        g.config.data.validation = a.validation;
    }
    if let Some(s) = g.seeds.clone() {
        g.config.train.seeds = s;
    }
    if let Some(e) = a.epochs {
        for stage in &mut g.config.train.stages {
            stage.epochs = e;
        }
    }
    g.config.train.checkpoint_dir = Some(g.out.clone());
    g.config.train.validate().map_err(train_failure)?;
    g.config.model.validate().config_err()?;

    let train_path = require(g.config.data.train.clone(), "training data (--train)")?;
    let val_path = require(g.config.data.validation.clone(), "validation data (--validation)")?;
    let train = load_split(&train_path)?;
    let val = load_split(&val_path)?;
    nonempty(&train, &train_path)?;
    nonempty(&val, &val_path)?;
    let verb = verbalizer(&g.config).config_err()?;

    let seeds = g.config.train.seeds.clone();
    with_manifest(&g, "train", seeds, |m| {
        let log_path = g.out.join("metrics.jsonl");
        if log_path.exists() {
            std::fs::remove_file(&log_path).domain_err()?;
        }
        let mut log = MetricsLog::append_to(&log_path);
        let tokenizer = JointModel::build_tokenizer(&train.instances, &verb);
        let model_cfg = g.config.model.clone();
        let make = |seed: u64| -> Result<JointTrainer, TrainError> {
            Ok(JointTrainer::new(JointModel::new(
                model_cfg.clone(),
                tokenizer.clone(),
                verb.clone(),
                seed,
            )?))
        };
        let report =
            two_stage_train(make, &train.instances, &val.instances, &g.config.train, &mut log).map_err(train_failure)?;
        m.output(&log_path);

        let last_stage = g.config.train.stages.len();
        let mut rows = Vec::new();
        for s in &report.per_seed {
            let ckpt = g.out.join(format!("seed-{}", s.seed)).join(format!("stage-{last_stage}"));
            println!(
                "seed={} accuracy={:.4} macro_f1={:.4} checkpoint={}",
                s.seed,
                s.final_metrics.accuracy,
                s.final_metrics.macro_f1,
                ckpt.display()
            );
            m.output(g.out.join(format!("seed-{}", s.seed)));
            rows.push(SeedRow {
                seed: s.seed,
                accuracy: s.final_metrics.accuracy,
                macro_f1: s.final_metrics.macro_f1,
                checkpoint: ckpt.display().to_string(),
            });
        }
        let per_seed = g.out.join("per_seed.csv");
        write_csv(&per_seed, &rows).domain_err()?;
        let agg_path = g.out.join("aggregate.csv");
        write_csv(&agg_path, &[report.aggregate]).domain_err()?;
        m.output(per_seed);
        m.output(agg_path);
        println!(
            "aggregate seeds={} accuracy={:.4} macro_f1={:.4}",
            report.aggregate.seeds, report.aggregate.accuracy, report.aggregate.macro_f1
        );
        Ok(())
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Serialize, Deserialize)]
struct ExplanationRow {
    id: String,
    gold: Option<String>,
    predicted: String,
    connective: String,
    explanation: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_class_f1: Option<std::collections::BTreeMap<String, f64>>,
    /// Generated explanations consistent with the predicted relation.
    pub consistency: f64,
}

fn load_model(path: &Path) -> Result<JointModel, Failure> {
    JointModel::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .config_err()
}

fn markers_and_lexicon(cfg: &Config) -> Result<(CueLexicon, SplitMarkers), Failure> {
    let s = distill_settings(cfg).config_err()?;
    Ok((s.lexicon, s.markers))
}

pub fn evaluate(mut g: Globals, a: EvalArgs) -> Result<(), Failure> {
    if a.data.is_some() {
        g.config.data.test = a.data;
    }
    let data_path = require(g.config.data.test.clone(), "dataset (--data)")?;
    let data = load_split(&data_path)?;
    nonempty(&data, &data_path)?;
    let model = load_model(&a.checkpoint)?;
    let (lexicon, markers) = markers_and_lexicon(&g.config)?;
    let decode: DecodeConfig = g.config.decode.into();

    with_manifest(&g, "evaluate", Vec::new(), |m| {
        let mut rows = Vec::with_capacity(data.len());
        let mut preds = Vec::with_capacity(data.len());
        for inst in &data.instances {
            let out = model.explain(&inst.arg1, &inst.arg2, &decode).domain_err()?;
            preds.push(out.classifier.predicted);
            rows.push(ExplanationRow {
                id: inst.id.clone(),
                gold: inst.label.map(|l| l.as_str().to_string()),
                predicted: out.classifier.predicted.as_str().to_string(),
                connective: out.classifier.predicted_connective,
                explanation: out.generated.text,
            });
        }
        let expl_path = g.out.join("explanations.jsonl");
        explain_distill::corpus::write_jsonl(&expl_path, &rows).domain_err()?;
        m.output(&expl_path);

        let texts: Vec<&str> = rows.iter().map(|r| r.explanation.as_str()).collect();
        let consistency = consistency_rate(&texts, &preds, &lexicon, &markers).domain_err()?;
        let golds: Option<Vec<_>> = data.instances.iter().map(|i| i.label).collect();
        let summary = match golds {
            Some(golds) => {
                let r = metrics_report(&preds, &golds).domain_err()?;
                EvaluationSummary {
                    n: r.n,
                    accuracy: Some(r.accuracy),
                    macro_f1: Some(r.macro_f1),
                    per_class_f1: Some(r.per_class_f1.iter().map(|(k, v)| (k.as_str().to_string(), *v)).collect()),
                    consistency,
                }
            }
            None => {
                log::warn!("some instances have no gold label; accuracy and F1 are skipped");
                EvaluationSummary {
                    n: data.len(),
                    accuracy: None,
                    macro_f1: None,
                    per_class_f1: None,
                    consistency,
                }
            }
        };
        let metrics_path = g.out.join("metrics.json");
        std::fs::write(&metrics_path, serde_json::to_string_pretty(&summary).domain_err()?).domain_err()?;
        m.output(&metrics_path);
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "n={} accuracy={} macro_f1={} consistency={:.4}",
            summary.n,
            fmt(summary.accuracy),
            fmt(summary.macro_f1),
            summary.consistency
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// faithfulness

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::InvalidFraction(_) | EvalError::InvalidNoise(_) | EvalError::MissingLabel(_) | EvalError::Empty => {
            Failure::Config(e.into())
        }
        _ => Failure::Domain(e.into()),
    }
}

pub fn faithfulness(mut g: Globals, a: FaithArgs) -> Result<(), Failure> {
    let f = &mut g.config.faithfulness;
    if let Some(o) = a.occlusion {
        f.occlusion = o.0;
    }
    if let Some(n) = a.noise {
        f.noise = n.0;
    }
    if let Some(r) = a.repeats {
        f.repeats = r;
    }
    if let Some(l) = &a.layer {
        f.layer = l.parse::<LayerSelector>().map_err(|e| Failure::Config(anyhow!(e)))?;
    }
    if a.data.is_some() {
        g.config.data.test = a.data;
    }
    let fc = g.config.faithfulness.clone();
    if let Some(bad) = fc.occlusion.iter().find(|x| !(0.0..1.0).contains(*x)) {
        return Err(eval_failure(EvalError::InvalidFraction(*bad)));
    }
    if fc.noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || fc.noise.windows(2).any(|w| w[1] < w[0]) {
        return Err(eval_failure(EvalError::InvalidNoise(
            "variances must be finite, non-negative and ascending".into(),
        )));
    }
    let data_path = require(g.config.data.test.clone(), "dataset (--data)")?;
    let data = load_split(&data_path)?;
    nonempty(&data, &data_path)?;
    let model = load_model(&a.checkpoint)?;
    let (lexicon, markers) = markers_and_lexicon(&g.config)?;
    let seed = g.seeds.as_ref().and_then(|s| s.first().copied()).unwrap_or(0);
    let settings = FaithfulnessSettings {
        lexicon,
        markers,
        mode: fc.mode,
        seed,
    };
    let explainer = JointExplainer {
        model: &model,
        decode: g.config.decode.into(),
        method: fc.method,
    };
    explainer.check_noise_site(fc.layer).map_err(eval_failure)?;

    with_manifest(&g, "faithfulness", vec![seed], |m| {
        let (acc, con) = baseline(&explainer, &data.instances, &settings).map_err(eval_failure)?;
        println!("baseline accuracy={acc:.4} consistency={con:.4}");
        let occlusion = occlusion_table(&explainer, &data.instances, &fc.occlusion, &settings).map_err(eval_failure)?;
        for c in &occlusion {
            println!(
                "occlusion fraction={} selection={} source={} measured={} value={:.4}",
                c.fraction,
                c.selection.as_str(),
                c.source_task.as_str(),
                c.measured_task.as_str(),
                c.value
            );
        }
        let noise_sweep = robustness_sweep(&explainer, &data.instances, &fc.noise, fc.layer, seed, fc.repeats, &settings)
            .map_err(eval_failure)?;
        for p in &noise_sweep {
            println!("noise sigma2={} accuracy={:.4} consistency={:.4}", p.sigma2, p.accuracy, p.consistency);
        }
        let report = FaithfulnessReport {
            baseline_accuracy: acc,
            baseline_consistency: con,
            occlusion,
            noise_sweep,
        };
        report.write_tables(&g.out).domain_err()?;
        let json = g.out.join("faithfulness.json");
        std::fs::write(&json, serde_json::to_string_pretty(&report).domain_err()?).domain_err()?;
        for p in write_charts(&report, &g.out, "").domain_err()? {
            m.output(p);
        }
        m.output(g.out.join("occlusion.csv"));
        m.output(g.out.join("noise_sweep.csv"));
        m.output(json);
        Ok(())
    })
}

fn occlusion_chart(cells: &[OcclusionCell]) -> LineChart {
    let mut series: Vec<Series> = Vec::new();
    for c in cells {
        let name = format!(
            "{} by {}, {}",
            c.selection.as_str(),
            c.source_task.as_str(),
            if c.measured_task == explain_distill::eval::Task::Classification {
                "acc"
            } else {
                "con"
            }
        );
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((c.fraction, c.value)),
            None => series.push(Series {
                name,
                points: vec![(c.fraction, c.value)],
            }),
        }
    }
    LineChart {
        title: "Occlusion".into(),
        x_label: "fraction occluded".into(),
        y_label: "metric".into(),
        x_categories: None,
        series,
    }
}

fn noise_chart(points: &[NoisePoint]) -> LineChart {
    let at = |f: fn(&NoisePoint) -> f64| points.iter().enumerate().map(|(i, p)| (i as f64, f(p))).collect();
    LineChart {
        title: "Internal noise".into(),
        x_label: "noise variance".into(),
        y_label: "metric".into(),
        x_categories: Some(points.iter().map(|p| p.sigma2.to_string()).collect()),
        series: vec![
            Series {
                name: "accuracy".into(),
                points: at(|p| p.accuracy),
            },
            Series {
                name: "consistency".into(),
                points: at(|p| p.consistency),
            },
        ],
    }
}

fn write_charts(report: &FaithfulnessReport, dir: &Path, prefix: &str) -> anyhow::Result<Vec<PathBuf>> {
    let occ = dir.join(format!("{prefix}occlusion.svg"));
    let noise = dir.join(format!("{prefix}noise_sweep.svg"));
    std::fs::write(&occ, occlusion_chart(&report.occlusion).to_svg())?;
    std::fs::write(&noise, noise_chart(&report.noise_sweep).to_svg())?;
    Ok(vec![occ, noise])
}

// ---------------------------------------------------------------------------
// report

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn report(g: Globals, a: ReportArgs) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for dir in &a.runs {
        let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE)).config_err()?;
        runs.push((dir.clone(), manifest));
    }

    with_manifest(&g, "report", Vec::new(), |m| {
        let mut md = String::from("# Run summary\n\n");
        for (k, (dir, manifest)) in runs.iter().enumerate() {
            md.push_str(&format!("## {} ({})\n\n", manifest.command, dir.display()));
            if manifest.partial {
                md.push_str("Run did not finish.\n\n");
                continue;
            }
            match manifest.command.as_str() {
                "train" => {
                    let mut r = csv::Reader::from_path(dir.join("aggregate.csv")).domain_err()?;
                    for row in r.deserialize::<explain_distill::train::Aggregate>() {
                        let row = row.domain_err()?;
                        md.push_str(&format!(
                            "| seeds | accuracy | macro-F1 |\n|---|---|---|\n| {} | {:.4} | {:.4} |\n\n",
                            row.seeds, row.accuracy, row.macro_f1
                        ));
                    }
                }
                "evaluate" => {
                    let s: EvaluationSummary = read_json(&dir.join("metrics.json")).domain_err()?;
                    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                    md.push_str(&format!(
                        "| n | accuracy | macro-F1 | consistency |\n|---|---|---|---|\n| {} | {} | {} | {:.4} |\n\n",
                        s.n,
                        fmt(s.accuracy),
                        fmt(s.macro_f1),
                        s.consistency
                    ));
                }
                "faithfulness" => {
                    let r: FaithfulnessReport = read_json(&dir.join("faithfulness.json")).domain_err()?;
                    md.push_str(&format!(
                        "Baseline accuracy {:.4}, consistency {:.4}.\n\n",
                        r.baseline_accuracy, r.baseline_consistency
                    ));
                    md.push_str("| fraction | selection | source | measured | value |\n|---|---|---|---|---|\n");
                    for c in &r.occlusion {
                        md.push_str(&format!(
                            "| {} | {} | {} | {} | {:.4} |\n",
                            c.fraction,
                            c.selection.as_str(),
                            c.source_task.as_str(),
                            c.measured_task.as_str(),
                            c.value
                        ));
                    }
                    md.push('\n');
                    for p in write_charts(&r, &g.out, &format!("run{k}-")).domain_err()? {
                        md.push_str(&format!("![]({})\n", p.file_name().unwrap().to_string_lossy()));
                        m.output(p);
                    }
                    md.push('\n');
                }
                _ => md.push_str("No summary for this command.\n\n"),
            }
        }
        let path = g.out.join("summary.md");
        std::fs::write(&path, &md).domain_err()?;
        m.output(&path);
        print!("{md}");
        Ok(())
    })
}
