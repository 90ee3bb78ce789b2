//! Discourse instances, explanations and dataset files.
//!
//! The native on-disk format is JSON Lines: one object per line with the keys
//! `id`, `arg1`, `arg2` and optionally `label`, `connective`, `context`,
//! `explanation_restatement`, `explanation_rationale`. A CSV file with the
//! same column names is accepted as an input format.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Top-level discourse relation.
///
/// The declaration order is also the tie-break order used by the verbalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationLabel {
    Temporal,
    Comparison,
    Contingency,
    Expansion,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 4] = [
        RelationLabel::Temporal,
        RelationLabel::Comparison,
        RelationLabel::Contingency,
        RelationLabel::Expansion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Temporal => "Temporal",
            RelationLabel::Comparison => "Comparison",
            RelationLabel::Contingency => "Contingency",
            RelationLabel::Expansion => "Expansion",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown relation label {0:?} (expected Temporal, Comparison, Contingency or Expansion)")]
pub struct UnknownLabel(pub String);

impl FromStr for RelationLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Temporal" => Ok(RelationLabel::Temporal),
            "Comparison" => Ok(RelationLabel::Comparison),
            "Contingency" => Ok(RelationLabel::Contingency),
            "Expansion" => Ok(RelationLabel::Expansion),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// Two-part explanation: what the arguments say, then why the relation holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    restatement: String,
    rationale: String,
}

impl Explanation {
    /// Both parts must be non-empty after trimming. Stored trimmed.
    pub fn new(restatement: impl Into<String>, rationale: impl Into<String>) -> Result<Self, Violation> {
        let restatement = restatement.into();
        let rationale = rationale.into();
        if restatement.trim().is_empty() {
            return Err(Violation::new("explanation_restatement", "must not be empty"));
        }
        if rationale.trim().is_empty() {
            return Err(Violation::new("explanation_rationale", "must not be empty"));
        }
        Ok(Self {
            restatement: restatement.trim().to_string(),
            rationale: rationale.trim().to_string(),
        })
    }

    pub fn restatement(&self) -> &str {
        &self.restatement
    }

    pub fn rationale(&self) -> &str {
        &self.rationale
    }

    /// Restatement and rationale joined by a single space.
    pub fn text(&self) -> String {
        format!("{} {}", self.restatement, self.rationale)
    }
}

/// An argument pair with its (optional) gold relation and explanation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscourseInstance {
    pub id: String,
    pub arg1: String,
    pub arg2: String,
    pub label: Option<RelationLabel>,
    pub connective: Option<String>,
    pub context: Option<String>,
    pub explanation: Option<Explanation>,
}

impl DiscourseInstance {
    pub fn new(
        id: impl Into<String>,
        arg1: impl Into<String>,
        arg2: impl Into<String>,
        label: Option<RelationLabel>,
    ) -> Self {
        Self {
            id: id.into(),
            arg1: arg1.into(),
            arg2: arg2.into(),
            label,
            connective: None,
            context: None,
            explanation: None,
        }
    }

    pub fn with_explanation(mut self, explanation: Explanation) -> Self {
        self.explanation = Some(explanation);
        self
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn with_connective(mut self, connective: impl Into<String>) -> Self {
        self.connective = Some(connective.into());
        self
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            id: Some(self.id.clone()),
            arg1: Some(self.arg1.clone()),
            arg2: Some(self.arg2.clone()),
            label: self.label.map(|l| l.as_str().to_string()),
            connective: self.connective.clone(),
            context: self.context.clone(),
            explanation_restatement: self.explanation.as_ref().map(|e| e.restatement.clone()),
            explanation_rationale: self.explanation.as_ref().map(|e| e.rationale.clone()),
        }
    }
}

/// A single invariant violation on a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// One record as it appears on disk, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_restatement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_rationale: Option<String>,
}

fn blank(s: &Option<String>) -> bool {
    s.as_deref().is_none_or(|v| v.trim().is_empty())
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

/// Checks every record invariant; an empty list means the record is valid.
pub fn validate_instance(raw: &RawInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if blank(&raw.id) {
        out.push(Violation::new("id", "missing or empty"));
    }
    if blank(&raw.arg1) {
        out.push(Violation::new("arg1", "missing or empty"));
    }
    if blank(&raw.arg2) {
        out.push(Violation::new("arg2", "missing or empty"));
    }
    if let Some(label) = raw.label.as_deref().filter(|l| !l.trim().is_empty()) {
        if let Err(e) = label.parse::<RelationLabel>() {
            out.push(Violation::new("label", e.to_string()));
        }
    }
    match (blank(&raw.explanation_restatement), blank(&raw.explanation_rationale)) {
        (false, true) => out.push(Violation::new(
            "explanation_rationale",
            "missing while a restatement is present",
        )),
        (true, false) => out.push(Violation::new(
            "explanation_restatement",
            "missing while a rationale is present",
        )),
        _ => {}
    }
    out
}

impl RawInstance {
    /// Validates and converts. Whitespace-only optional fields become `None`.
    pub fn into_instance(self) -> Result<DiscourseInstance, Vec<Violation>> {
        let violations = validate_instance(&self);
        if !violations.is_empty() {
            return Err(violations);
        }
        let label = non_blank(self.label).map(|l| l.parse().expect("validated"));
        let explanation = match (
            non_blank(self.explanation_restatement),
            non_blank(self.explanation_rationale),
        ) {
            (Some(r), Some(q)) => Some(Explanation::new(r, q).map_err(|v| vec![v])?),
            _ => None,
        };
        Ok(DiscourseInstance {
            id: self.id.unwrap_or_default(),
            arg1: self.arg1.unwrap_or_default(),
            arg2: self.arg2.unwrap_or_default(),
            label,
            connective: non_blank(self.connective),
            context: non_blank(self.context),
            explanation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    /// Guesses the split from a file name; defaults to `Train`.
    pub fn infer(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if stem.contains("test") {
            SplitName::Test
        } else if stem.contains("valid") || stem.contains("dev") {
            SplitName::Validation
        } else {
            SplitName::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub instances: Vec<DiscourseInstance>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, instances: Vec<DiscourseInstance>) -> Self {
        Self { name, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Train/validation/test splits whose ids must be pairwise disjoint.
#[derive(Debug, Clone, Default)]
pub struct DatasetBundle {
    splits: Vec<DatasetSplit>,
}

impl DatasetBundle {
    pub fn new(splits: Vec<DatasetSplit>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, SplitName> = HashMap::new();
        for split in &splits {
            for inst in &split.instances {
                if let Some(prev) = seen.insert(&inst.id, split.name) {
                    return Err(CorpusError::CrossSplitId {
                        id: inst.id.clone(),
                        first: prev,
                        second: split.name,
                    });
                }
            }
        }
        Ok(Self { splits })
    }

    pub fn get(&self, name: SplitName) -> Option<&DatasetSplit> {
        self.splits.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    NativeJsonlines,
    CsvWithHeader,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::CsvWithHeader,
            _ => DatasetFormat::NativeJsonlines,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("id {id:?} appears in both the {first:?} and {second:?} splits")]
    CrossSplitId {
        id: String,
        first: SplitName,
        second: SplitName,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a dataset file. Every record is validated; order is preserved.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<DatasetSplit, CorpusError> {
    let records = match format {
        DatasetFormat::NativeJsonlines => read_jsonl_records(path)?,
        DatasetFormat::CsvWithHeader => read_csv_records(path)?,
    };
    let mut instances = Vec::with_capacity(records.len());
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (line, raw) in records {
        let inst = raw.into_instance().map_err(|mut v| {
            let first = v.remove(0);
            CorpusError::Malformed {
                line,
                field: first.field.to_string(),
                message: first.message,
            }
        })?;
        if let Some(&first_line) = first_seen.get(&inst.id) {
            return Err(CorpusError::DuplicateId {
                id: inst.id,
                first_line,
                second_line: line,
            });
        }
        first_seen.insert(inst.id.clone(), line);
        instances.push(inst);
    }
    Ok(DatasetSplit::new(SplitName::infer(path), instances))
}

/// Reads raw JSON Lines records with their 1-based line numbers, skipping blank lines.
pub fn read_jsonl_records<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: idx + 1,
            field: json_error_field(&e),
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`').nth(1).unwrap_or("<record>").to_string()
}

fn read_csv_records(path: &Path) -> Result<Vec<(usize, RawInstance)>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let mut out = Vec::new();
    for (idx, rec) in reader.deserialize::<RawInstance>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let raw = rec.map_err(|e| CorpusError::Malformed {
            line,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        out.push((line, raw));
    }
    Ok(out)
}

/// Writes a split in the native format; `load_dataset` reproduces it exactly.
pub fn save_dataset(split: &DatasetSplit, path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, split.instances.iter().map(DiscourseInstance::to_raw))
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, &rec).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
