//! The per-command config file. Flags override file values, which override defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use explain_distill::distill::client::RemoteConfig;
use explain_distill::distill::RetryPolicy;
use explain_distill::eval::{AttributionMethod, OcclusionMode};
use explain_distill::model::{Aggregation, DecodeConfig, LayerSelector, ModelConfig};
use explain_distill::train::TrainRunConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub distill: DistillConfig,
    pub model: ModelConfig,
    pub verbalizer: VerbalizerConfig,
    pub train: TrainRunConfig,
    pub decode: DecodeSection,
    pub faithfulness: FaithfulnessConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub input: Option<PathBuf>,
    /// Recorded completions; when set, no remote client is used.
    pub replay: Option<PathBuf>,
    /// Remote endpoints in fallback order.
    pub remote: Vec<RemoteConfig>,
    pub policy: RetryPolicy,
    pub lexicon: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub markers: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerbalizerConfig {
    pub path: Option<PathBuf>,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub max_new_tokens: usize,
    pub beam_width: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeConfig::default();
        Self {
            max_new_tokens: d.max_new_tokens,
            beam_width: d.beam_width,
        }
    }
}

impl From<DecodeSection> for DecodeConfig {
    fn from(d: DecodeSection) -> Self {
        DecodeConfig {
            max_new_tokens: d.max_new_tokens,
            beam_width: d.beam_width,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaithfulnessConfig {
    pub occlusion: Vec<f64>,
    pub noise: Vec<f64>,
    pub layer: LayerSelector,
    pub repeats: usize,
    pub mode: OcclusionMode,
    pub method: AttributionMethod,
}

impl Default for FaithfulnessConfig {
    fn default() -> Self {
        Self {
            occlusion: vec![0.1, 0.2, 0.3],
            noise: vec![0.0, 0.01, 0.1, 1.0],
            layer: LayerSelector::Final,
            repeats: 5,
            mode: OcclusionMode::Mask,
            method: AttributionMethod::GradientTimesInput,
        }
    }
}

impl Config {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut self.data.train);
        fix(&mut self.data.validation);
        fix(&mut self.data.test);
        fix(&mut self.distill.input);
        fix(&mut self.distill.replay);
        fix(&mut self.distill.lexicon);
        fix(&mut self.distill.examples);
        fix(&mut self.distill.instructions);
        fix(&mut self.verbalizer.path);
    }
}

/// Parses `1,2,3`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}
