//! The text-in/text-out contract for teacher LLMs, and its implementations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DistillError;
use crate::corpus::read_jsonl_records;

/// Environment variable holding the API key for remote providers.
pub const API_KEY_ENV: &str = "EXPLAIN_DISTILL_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// The provider declined to answer (content policy and similar).
    #[error("refused: {0}")]
    Refusal(String),
    /// Worth retrying after a delay (rate limit, timeout, 5xx).
    #[error("transient: {0}")]
    Transient(String),
    /// Retrying will not help (auth, malformed request).
    #[error("fatal: {0}")]
    Fatal(String),
}

pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String, ClientError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn send(&self, prompt: &str) -> Result<String, ClientError> {
        (**self).send(prompt)
    }
}

/// Heuristic for completions that are polite refusals rather than answers.
pub fn looks_like_refusal(text: &str) -> bool {
    const OPENERS: [&str; 6] = [
        "i'm sorry",
        "i am sorry",
        "i cannot",
        "i can't",
        "i can not",
        "sorry, but",
    ];
    let head = text.trim_start().to_lowercase();
    OPENERS.iter().any(|o| head.starts_with(o))
}

/// Stable key of a prompt, used by replay files.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayErrorKind {
    Refusal,
    Transient,
    Fatal,
}

/// One replayed exchange. Matched by exact prompt key, or else by substring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ReplayErrorKind>,
}

/// Answers from a file of recorded completions; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    name: String,
    entries: Vec<ReplayEntry>,
}

impl ReplayClient {
    pub fn new(name: impl Into<String>, entries: Vec<ReplayEntry>) -> Self {
        Self {
            name: name.into(),
            entries,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, DistillError> {
        let entries = read_jsonl_records::<ReplayEntry>(path)?
            .into_iter()
            .map(|(_, e)| e)
            .collect();
        let name = format!("replay:{}", path.display());
        Ok(Self::new(name, entries))
    }

    fn lookup(&self, prompt: &str) -> Option<&ReplayEntry> {
        let key = prompt_key(prompt);
        self.entries
            .iter()
            .find(|e| e.key.as_deref() == Some(key.as_str()))
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| e.contains.as_deref().is_some_and(|c| prompt.contains(c)))
            })
    }
}

impl LlmClient for ReplayClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, prompt: &str) -> Result<String, ClientError> {
        let entry = self
            .lookup(prompt)
            .ok_or_else(|| ClientError::Fatal(format!("no replay entry for prompt {}", prompt_key(prompt))))?;
        match (entry.error, &entry.completion) {
            (Some(ReplayErrorKind::Refusal), _) => Err(ClientError::Refusal("replayed refusal".into())),
            (Some(ReplayErrorKind::Transient), _) => Err(ClientError::Transient("replayed transient error".into())),
            (Some(ReplayErrorKind::Fatal), _) => Err(ClientError::Fatal("replayed fatal error".into())),
            (None, Some(text)) => Ok(text.clone()),
            (None, None) => Err(ClientError::Fatal("replay entry has neither completion nor error".into())),
        }
    }
}

/// Settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_temperature() -> f64 {
    0.0
}

fn default_timeout_secs() -> u64 {
    120
}

/// Maps an HTTP status and body to the provider-agnostic error kinds.
pub fn classify_http_failure(status: u16, body: &str) -> ClientError {
    let lower = body.to_lowercase();
    let policy = ["content_filter", "content policy", "data_inspection_failed", "inappropriate", "safety"]
        .iter()
        .any(|k| lower.contains(k));
    match status {
        400 | 403 if policy => ClientError::Refusal(format!("HTTP {status}: {body}")),
        408 | 409 | 425 | 429 | 500..=599 => ClientError::Transient(format!("HTTP {status}: {body}")),
        _ => ClientError::Fatal(format!("HTTP {status}: {body}")),
    }
}

#[cfg(feature = "http")]
pub use http::HttpClient;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::*;

    pub struct HttpClient {
        name: String,
        config: RemoteConfig,
        api_key: String,
        agent: ureq::Agent,
    }

    impl HttpClient {
        pub fn new(config: RemoteConfig, api_key: String) -> Self {
            let agent = ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(config.timeout_secs))
                .build();
            Self {
                name: format!("{}@{}", config.model, config.base_url),
                config,
                api_key,
                agent,
            }
        }

        /// Reads the key from [`API_KEY_ENV`].
        pub fn from_env(config: RemoteConfig) -> Result<Self, DistillError> {
            let key = std::env::var(API_KEY_ENV)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or(DistillError::MissingApiKey)?;
            Ok(Self::new(config, key))
        }
    }

    impl LlmClient for HttpClient {
        fn name(&self) -> &str {
            &self.name
        }

        fn send(&self, prompt: &str) -> Result<String, ClientError> {
            let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
            let body = serde_json::json!({
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": [{"role": "user", "content": prompt}],
            });
            let resp = self
                .agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body);
            let resp = match resp {
                Ok(r) => r,
                Err(ureq::Error::Status(code, r)) => {
                    let text = r.into_string().unwrap_or_default();
                    return Err(classify_http_failure(code, &text));
                }
                Err(ureq::Error::Transport(t)) => return Err(ClientError::Transient(t.to_string())),
            };
            let json: serde_json::Value = resp
                .into_json()
                .map_err(|e| ClientError::Transient(format!("unreadable response body: {e}")))?;
            let choice = &json["choices"][0];
            if choice["finish_reason"].as_str() == Some("content_filter") {
                return Err(ClientError::Refusal("finish_reason=content_filter".into()));
            }
            choice["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ClientError::Fatal(format!("unexpected response shape: {json}")))
        }
    }
}
