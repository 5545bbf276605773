//! LLM gateway: prompt construction, provider calls, replay cache and
//! response parsing.
//!
//! Responses carry one line per queried description with eight
//! pipe-delimited fields in the order AC | AV | PR | UI | S | C | I | A
//! (the same order as [`MetricKind::ALL`]).

mod cache;
mod client;
mod parse;
mod prompt;
mod runner;

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvss::{BaseVector, MetricKind};

pub use cache::{cache_key, ReplayCache};
pub use client::{
    submit_batch, ChatTransport, HttpRequest, HttpResponse, OfflineTransport, ReqwestTransport,
    RetryPolicy,
};
pub use parse::{normalize_label, parse_response};
pub use prompt::{build_prompt, bundled_shots, redact_identifiers, Prompt, ShotExample};
pub use runner::{run_predictions, PredictionRun, PredictionTable, ProviderFailure};

pub const DEFAULT_BATCH_SIZE: usize = 20;
pub const DEFAULT_SHOTS: usize = 2;
pub const ALLOWED_SHOTS: [usize; 4] = [0, 2, 5, 10];

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch of {len} exceeds batch size {max}")]
    OversizedBatch { len: usize, max: usize },
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("replay cache miss for model {model_id} (key {key})")]
    CacheMiss { model_id: String, key: String },
    #[error("provider {provider}: {message}")]
    ProviderError { provider: String, message: String },
    #[error("provider {provider}: authentication failed: {message}")]
    AuthError { provider: String, message: String },
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
    #[error("prediction table: {0}")]
    Schema(String),
    #[error("coverage mismatch: {0}")]
    CoverageMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Always call the provider; the cache is not consulted.
    Live,
    /// Serve from the cache only; never touches the network.
    Replay,
    /// Serve cache hits, call the provider on misses and store the result.
    Record,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Replay => "replay",
            Mode::Record => "record",
        })
    }
}

fn default_max_parallel() -> usize {
    1
}

fn default_auth_header() -> String {
    "Authorization".into()
}

fn default_auth_prefix() -> String {
    "Bearer ".into()
}

fn default_timeout() -> u64 {
    120
}

/// One chat-completion provider. Secrets never live here: the API key is
/// read at call time from the environment variable named by
/// `credential_env_var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Short model id used in outputs, e.g. `G4`, `G5`, `L`, `GM`, `DS`, `GR`.
    pub provider_id: String,
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub credential_env_var: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default)]
    pub extra_headers: std::collections::BTreeMap<String, String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl ProviderConfig {
    pub fn new(provider_id: &str, endpoint: &str, model_name: &str) -> Self {
        ProviderConfig {
            provider_id: provider_id.into(),
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_parallel: 1,
            credential_env_var: None,
            auth_header: default_auth_header(),
            auth_prefix: default_auth_prefix(),
            extra_headers: Default::default(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.provider_id.is_empty() || self.provider_id.contains(['\t', '\n', ',']) {
            return Err(format!("invalid provider_id {:?}", self.provider_id));
        }
        if self.max_parallel == 0 {
            return Err(format!("{}: max_parallel must be >= 1", self.provider_id));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("{}: temperature out of range", self.provider_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub shots: usize,
    pub shot_examples: Vec<ShotExample>,
    pub batch_size: usize,
}

impl PromptSpec {
    /// Uses the first `shots` bundled synthetic examples.
    pub fn with_shots(shots: usize, batch_size: usize) -> Result<Self, GatewayError> {
        let spec = PromptSpec {
            shots,
            shot_examples: bundled_shots().into_iter().take(shots).collect(),
            batch_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !ALLOWED_SHOTS.contains(&self.shots) {
            return Err(GatewayError::InvalidSpec(format!(
                "shots must be one of {ALLOWED_SHOTS:?}, got {}",
                self.shots
            )));
        }
        if self.shot_examples.len() != self.shots {
            return Err(GatewayError::InvalidSpec(format!(
                "{} shot examples for {} shots",
                self.shot_examples.len(),
                self.shots
            )));
        }
        if self.batch_size == 0 {
            return Err(GatewayError::InvalidSpec("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec::with_shots(DEFAULT_SHOTS, DEFAULT_BATCH_SIZE)
            .expect("bundled defaults are valid")
    }
}

/// One model's labels for one CVE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub cve_id: String,
    pub model_id: String,
    pub labels: BaseVector,
    pub valid: bool,
}

impl PredictionSet {
    pub fn new(cve_id: &str, model_id: &str, labels: BaseVector) -> Self {
        PredictionSet {
            cve_id: cve_id.into(),
            model_id: model_id.into(),
            valid: labels.is_complete(),
            labels,
        }
    }

    pub fn unknown(cve_id: &str, model_id: &str) -> Self {
        PredictionSet::new(cve_id, model_id, BaseVector::unknown())
    }

    pub fn label(&self, kind: MetricKind) -> crate::cvss::MetricValue {
        self.labels.get(kind)
    }
}
