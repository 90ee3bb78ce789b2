use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// What ran, with which settings, and what it wrote. One per output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub outputs: Vec<PathBuf>,
    /// Set until the command finishes successfully.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct ManifestHandle {
    path: PathBuf,
    pub manifest: RunManifest,
}

impl ManifestHandle {
    /// Creates `dir` and writes a partial manifest into it.
    pub fn start(dir: &Path, command: &str, config: &impl Serialize, seeds: Vec<u64>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let manifest = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seeds,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: Utc::now(),
            finished_at: None,
            outputs: Vec::new(),
            partial: true,
            error: None,
        };
        let h = Self {
            path: dir.join(MANIFEST_FILE),
            manifest,
        };
        h.write()?;
        Ok(h)
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.manifest.outputs.push(path.into());
    }

    pub fn finish(&mut self) -> anyhow::Result<()> {
        self.manifest.partial = false;
        self.manifest.finished_at = Some(Utc::now());
        self.write()
    }

    /// Leaves the manifest partial and records why.
    pub fn fail(&mut self, error: &str) {
        self.manifest.error = Some(error.to_string());
        self.manifest.finished_at = Some(Utc::now());
        if let Err(e) = self.write() {
            log::warn!("could not update {}: {e}", self.path.display());
        }
    }

    fn write(&self) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&self.path, text).with_context(|| format!("writing {}", self.path.display()))
    }
}
