use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_PROMPT: &str = "Convert this document page to Markdown. Transcribe all text in natural \
reading order, keep headings and lists, write tables as HTML <table> elements with rowspan and colspan \
where cells are merged, and output only the Markdown.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Minimal,
    Low,
    Medium,
    High,
}

impl std::str::FromStr for ReasoningEffort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal" => Ok(Self::Minimal),
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(Error::Config(format!("unknown reasoning effort `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertConfig {
    /// Base URL (`.../v1`) or the full chat-completions URL.
    pub endpoint: String,
    /// Model name sent in the request body.
    pub model: String,
    /// Directory name for outputs; defaults to the model name with `/` replaced.
    pub model_id: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub prompt: String,
    pub dpi: u32,
    pub temperature: Option<f64>,
    pub reasoning_effort: Option<ReasoningEffort>,
    pub timeout_seconds: f64,
    pub workers: usize,
    pub max_retries: u32,
    /// First retry delay; doubles after each failed attempt.
    pub backoff_seconds: f64,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        ConvertConfig {
            endpoint: "http://localhost:8000/v1".into(),
            model: String::new(),
            model_id: None,
            api_key_env: None,
            prompt: DEFAULT_PROMPT.into(),
            dpi: 200,
            temperature: None,
            reasoning_effort: None,
            timeout_seconds: 500.0,
            workers: 32,
            max_retries: 2,
            backoff_seconds: 1.0,
        }
    }
}

impl ConvertConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ConvertConfig { endpoint: endpoint.into(), model: model.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.model.trim().is_empty() {
            return fail("model name is empty");
        }
        if !(self.timeout_seconds.is_finite() && self.timeout_seconds > 0.0) {
            return fail("timeout_seconds must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        if self.dpi == 0 {
            return fail("dpi must be positive");
        }
        if !(self.backoff_seconds.is_finite() && self.backoff_seconds >= 0.0) {
            return fail("backoff_seconds must be non-negative");
        }
        if !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return fail("endpoint must be an http(s) URL");
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| self.model.replace(['/', '\\', ':'], "_"))
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_owned()
        } else {
            format!("{base}/chat/completions")
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds)
    }

    pub(crate) fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_secs_f64(self.backoff_seconds * 2f64.powi(attempt.min(16) as i32))
    }

    /// Hex SHA-256 of the prompt, stored in sidecars.
    pub fn prompt_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.prompt.as_bytes()))
    }

    /// Reads the key from the configured environment variable.
    pub fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| Error::MissingApiKey(var.clone())),
        }
    }
}
