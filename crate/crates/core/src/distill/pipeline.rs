//! Dataset enrichment: prompt every instance, validate the answer, checkpoint.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::client::{looks_like_refusal, ClientError, LlmClient};
use super::lexicon::{check_consistency, Consistency, CueLexicon};
use super::parse::{parse_explanation, SplitMarkers};
use super::prompt::{build_llm_prompt, InContextExample, PromptTemplate};
use super::DistillError;
use crate::corpus::{DatasetSplit, DiscourseInstance, Explanation, RawInstance};

/// Retry, fallback and context-supplementation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Sends per client when errors are transient.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Arguments shorter than this (in characters) get their context attached.
    pub min_chars: usize,
    /// Requests in flight at once.
    pub parallelism: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            min_chars: 40,
            parallelism: 4,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u64.saturating_pow(retry.saturating_sub(1));
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Ok,
    Refused,
    Unparseable,
    Inconsistent,
    /// Transient errors persisted on every client.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationOutcome {
    pub status: OutcomeStatus,
    pub raw: String,
    /// Present iff `status` is `Ok`.
    pub explanation: Option<Explanation>,
    pub attempts: u32,
    pub client: Option<String>,
}

/// Checkpoint and review-queue record: an instance plus how generation went.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    #[serde(flatten)]
    pub instance: RawInstance,
    pub status: OutcomeStatus,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
}

impl OutcomeRecord {
    fn new(inst: &DiscourseInstance, outcome: &GenerationOutcome) -> Self {
        let mut instance = inst.to_raw();
        if let Some(e) = &outcome.explanation {
            instance.explanation_restatement = Some(e.restatement().to_string());
            instance.explanation_rationale = Some(e.rationale().to_string());
        }
        Self {
            instance,
            status: outcome.status,
            attempts: outcome.attempts,
            raw: outcome.raw.clone(),
            client: outcome.client.clone(),
        }
    }

    fn outcome(&self) -> Result<(DiscourseInstance, GenerationOutcome), DistillError> {
        let inst = self
            .instance
            .clone()
            .into_instance()
            .map_err(|v| DistillError::Checkpoint(format!("invalid record: {}", v[0])))?;
        let explanation = if self.status == OutcomeStatus::Ok {
            Some(inst.explanation.clone().ok_or_else(|| {
                DistillError::Checkpoint(format!("record {} is ok but has no explanation", inst.id))
            })?)
        } else {
            None
        };
        let outcome = GenerationOutcome {
            status: self.status,
            raw: self.raw.clone(),
            explanation,
            attempts: self.attempts,
            client: self.client.clone(),
        };
        Ok((inst, outcome))
    }
}

/// Everything besides the clients that generation needs.
#[derive(Debug, Clone, Default)]
pub struct DistillSettings {
    pub template: PromptTemplate,
    pub examples: Vec<InContextExample>,
    pub lexicon: CueLexicon,
    pub markers: SplitMarkers,
    pub policy: RetryPolicy,
}

impl DistillSettings {
    pub fn with_defaults(policy: RetryPolicy) -> Self {
        Self {
            examples: InContextExample::defaults(),
            policy,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReviewItem {
    pub instance: DiscourseInstance,
    pub outcome: GenerationOutcome,
}

#[derive(Debug, Clone)]
pub struct GenerationReport {
    /// Instances that received an explanation, in input order.
    pub enriched: DatasetSplit,
    /// Instances needing manual attention, in input order.
    pub review_queue: Vec<ReviewItem>,
    /// Instances restored from the checkpoint without any client call.
    pub cached: usize,
    pub cached_ids: HashSet<String>,
}

impl GenerationReport {
    pub fn count(&self, status: OutcomeStatus) -> usize {
        match status {
            OutcomeStatus::Ok => self.enriched.len(),
            s => self.review_queue.iter().filter(|r| r.outcome.status == s).count(),
        }
    }

    /// Like [`count`](Self::count), but only instances generated in this run.
    pub fn fresh_count(&self, status: OutcomeStatus) -> usize {
        match status {
            OutcomeStatus::Ok => self
                .enriched
                .instances
                .iter()
                .filter(|i| !self.cached_ids.contains(&i.id))
                .count(),
            s => self
                .review_queue
                .iter()
                .filter(|r| r.outcome.status == s && !self.cached_ids.contains(&r.instance.id))
                .count(),
        }
    }
}

/// The prompt-time view of an instance: context only when an argument is short.
fn prompt_view(inst: &DiscourseInstance, min_chars: usize) -> DiscourseInstance {
    let short = inst.arg1.trim().chars().count() < min_chars || inst.arg2.trim().chars().count() < min_chars;
    let mut view = inst.clone();
    if !short {
        view.context = None;
    }
    view.explanation = None;
    view
}

enum Abort {
    Fatal { id: String, message: String },
    Io(DistillError),
}

fn generate_one(
    inst: &DiscourseInstance,
    clients: &[&dyn LlmClient],
    settings: &DistillSettings,
) -> Result<GenerationOutcome, Abort> {
    let view = prompt_view(inst, settings.policy.min_chars);
    let prompt = build_llm_prompt(&view, &settings.examples, &settings.template).map_err(Abort::Io)?;
    let label = inst.label.expect("checked before dispatch");
    let mut attempts = 0;
    let mut last_status = OutcomeStatus::Refused;
    let mut last_raw = String::new();
    for client in clients {
        let mut tries = 0;
        let reply = loop {
            tries += 1;
            attempts += 1;
            match client.send(&prompt) {
                Ok(text) if looks_like_refusal(&text) => break Err((OutcomeStatus::Refused, text)),
                Ok(text) => break Ok(text),
                Err(ClientError::Refusal(msg)) => break Err((OutcomeStatus::Refused, msg)),
                Err(ClientError::Fatal(message)) => {
                    return Err(Abort::Fatal {
                        id: inst.id.clone(),
                        message: format!("{}: {message}", client.name()),
                    })
                }
                Err(ClientError::Transient(msg)) => {
                    if tries >= settings.policy.max_attempts {
                        break Err((OutcomeStatus::Failed, msg));
                    }
                    std::thread::sleep(settings.policy.backoff(tries));
                }
            }
        };
        let text = match reply {
            Ok(t) => t,
            Err((status, raw)) => {
                // try the next client in fallback order
                last_status = status;
                last_raw = raw;
                continue;
            }
        };
        let outcome = |status, explanation| GenerationOutcome {
            status,
            raw: text.clone(),
            explanation,
            attempts,
            client: Some(client.name().to_string()),
        };
        return Ok(match parse_explanation(&text, &settings.markers) {
            Err(_) => outcome(OutcomeStatus::Unparseable, None),
            Ok(e) => match check_consistency(&e, label, &settings.lexicon) {
                Consistency::Consistent => outcome(OutcomeStatus::Ok, Some(e)),
                Consistency::Inconsistent => outcome(OutcomeStatus::Inconsistent, None),
            },
        });
    }
    Ok(GenerationOutcome {
        status: last_status,
        raw: last_raw,
        explanation: None,
        attempts,
        client: None,
    })
}

fn read_checkpoint(path: &Path) -> Result<HashMap<String, OutcomeRecord>, DistillError> {
    let mut out = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(source) => {
            return Err(DistillError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<OutcomeRecord>(&line) {
            Ok(rec) => {
                if let Some(id) = rec.instance.id.clone() {
                    out.insert(id, rec);
                }
            }
            // a torn final write; that instance is simply generated again
            Err(e) => log::warn!("{}:{}: skipping unreadable checkpoint line: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

struct CheckpointWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl CheckpointWriter {
    fn open(path: &Path) -> Result<Self, DistillError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| DistillError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    fn append(&self, rec: &OutcomeRecord) -> Result<(), DistillError> {
        let mut line = serde_json::to_string(rec).expect("record serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("checkpoint lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|source| DistillError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Enriches `split` with explanations from `clients` (tried in fallback order).
///
/// With a checkpoint path, every finished instance is appended to it and a
/// rerun restores finished ids from it instead of calling a client again. A
/// fatal client error stops the run; the checkpoint keeps what was finished.
pub fn generate_dataset(
    split: &DatasetSplit,
    clients: &[&dyn LlmClient],
    settings: &DistillSettings,
    checkpoint: Option<&Path>,
) -> Result<GenerationReport, DistillError> {
    if clients.is_empty() {
        return Err(DistillError::NoClients);
    }
    if let Some(inst) = split.instances.iter().find(|i| i.label.is_none()) {
        return Err(DistillError::MissingLabel(inst.id.clone()));
    }
    if settings.examples.is_empty() {
        return Err(DistillError::NoExamples);
    }

    let done = match checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => HashMap::new(),
    };
    let writer = checkpoint.map(CheckpointWriter::open).transpose()?;

    let n = split.len();
    let mut results: Vec<Option<(DiscourseInstance, GenerationOutcome)>> = vec![None; n];
    let mut pending = Vec::new();
    let mut cached = 0;
    let mut cached_ids = HashSet::new();
    for (i, inst) in split.instances.iter().enumerate() {
        match done.get(&inst.id) {
            Some(rec) => {
                results[i] = Some(rec.outcome()?);
                cached += 1;
                cached_ids.insert(inst.id.clone());
            }
            None => pending.push(i),
        }
    }

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let abort: Mutex<Option<Abort>> = Mutex::new(None);
    let finished: Mutex<Vec<(usize, GenerationOutcome)>> = Mutex::new(Vec::new());
    let workers = settings.policy.parallelism.max(1).min(pending.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = pending.get(k) else { break };
                let inst = &split.instances[idx];
                let result = generate_one(inst, clients, settings).and_then(|outcome| {
                    if let Some(w) = &writer {
                        w.append(&OutcomeRecord::new(inst, &outcome)).map_err(Abort::Io)?;
                    }
                    Ok(outcome)
                });
                match result {
                    Ok(outcome) => finished.lock().unwrap().push((idx, outcome)),
                    Err(a) => {
                        stop.store(true, Ordering::SeqCst);
                        abort.lock().unwrap().get_or_insert(a);
                        break;
                    }
                }
            });
        }
    });

    if let Some(a) = abort.into_inner().unwrap() {
        return Err(match a {
            Abort::Fatal { id, message } => DistillError::Fatal { id, message },
            Abort::Io(e) => e,
        });
    }
    for (idx, outcome) in finished.into_inner().unwrap() {
        results[idx] = Some((split.instances[idx].clone(), outcome));
    }

    let mut enriched = Vec::new();
    let mut review_queue = Vec::new();
    for (inst, outcome) in results.into_iter().map(|r| r.expect("every instance resolved")) {
        match &outcome.explanation {
            Some(e) if outcome.status == OutcomeStatus::Ok => {
                enriched.push(inst.with_explanation(e.clone()));
            }
            _ => review_queue.push(ReviewItem {
                instance: inst,
                outcome,
            }),
        }
    }
    Ok(GenerationReport {
        enriched: DatasetSplit::new(split.name, enriched),
        review_queue,
        cached,
        cached_ids,
    })
}

/// Writes the review queue in the native record format plus status fields.
pub fn save_review_queue(items: &[ReviewItem], path: &Path) -> Result<(), DistillError> {
    let records = items.iter().map(|r| OutcomeRecord::new(&r.instance, &r.outcome));
    crate::corpus::write_jsonl(path, records)?;
    Ok(())
}

pub fn load_review_queue(path: &Path) -> Result<Vec<OutcomeRecord>, DistillError> {
    Ok(crate::corpus::read_jsonl_records(path)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Merges hand-corrected review records (those now carrying an explanation) by id.
///
/// Existing ids are replaced in place; new ones are appended.
pub fn merge_reviewed(enriched: &DatasetSplit, reviewed: &[OutcomeRecord]) -> Result<DatasetSplit, DistillError> {
    let mut out = enriched.clone();
    for rec in reviewed {
        let inst = rec
            .instance
            .clone()
            .into_instance()
            .map_err(|v| DistillError::Checkpoint(format!("invalid reviewed record: {}", v[0])))?;
        if inst.explanation.is_none() {
            continue;
        }
        match out.instances.iter_mut().find(|i| i.id == inst.id) {
            Some(slot) => *slot = inst,
            None => out.instances.push(inst),
        }
    }
    Ok(out)
}
