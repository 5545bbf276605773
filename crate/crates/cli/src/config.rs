//! `vulnscore.toml`: paths, prompt settings, retry policy and providers.
//!
//! ```toml
//! out_dir = "out"
//! dataset = "out/dataset.jsonl"
//! predictions = "out/predictions.csv"
//! cache = "cache/responses.tsv"
//! seed = 42
//! mode = "replay"
//!
//! [prompt]
//! shots = 2
//! batch_size = 20
//!
//! [retry]
//! max_attempts = 5
//! base_delay_ms = 1000
//! max_delay_ms = 60000
//!
//! [[providers]]
//! provider_id = "G4"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model_name = "gpt-4o"
//! credential_env_var = "OPENAI_API_KEY"
//! max_parallel = 2
//! ```
//!
//! API keys are never read from this file; each provider names the
//! environment variable that holds its key.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use vulnscore::gateway::{Mode, PromptSpec, ProviderConfig, RetryPolicy, ALLOWED_SHOTS};

use crate::failure::{input_error, Classify, CmdResult};

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

fn default_mode() -> Mode {
    Mode::Replay
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_shots() -> usize {
    vulnscore::gateway::DEFAULT_SHOTS
}

fn default_batch_size() -> usize {
    vulnscore::gateway::DEFAULT_BATCH_SIZE
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            shots: default_shots(),
            batch_size: default_batch_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ms: u64,
}

fn default_attempts() -> u32 {
    5
}

fn default_base_delay() -> u64 {
    1000
}

fn default_max_delay() -> u64 {
    60_000
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            max_delay_ms: default_max_delay(),
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_delay: Duration::from_millis(self.base_delay_ms),
            max_delay: Duration::from_millis(self.max_delay_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub shots: Option<usize>,
    pub batch_size: Option<usize>,
}

impl AppConfig {
    pub fn parse(text: &str) -> CmdResult<Self> {
        toml::from_str(text).input("invalid configuration")
    }

    /// Loads `path` (or defaults), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CmdResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    fs::read_to_string(p).input(format!("cannot read config {}", p.display()))?;
                let mut cfg = AppConfig::parse(&text)?;
                cfg.resolve_relative_to(p.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => AppConfig::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = overrides.mode {
            cfg.mode = mode;
        }
        if let Some(shots) = overrides.shots {
            cfg.prompt.shots = shots;
        }
        if let Some(b) = overrides.batch_size {
            cfg.prompt.batch_size = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Paths in a config file are relative to the file's directory.
    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [&mut self.dataset, &mut self.predictions, &mut self.cache]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> CmdResult {
        if !ALLOWED_SHOTS.contains(&self.prompt.shots) {
            return Err(input_error(format!(
                "shots must be one of {ALLOWED_SHOTS:?}, got {}",
                self.prompt.shots
            )));
        }
        if self.prompt.batch_size == 0 {
            return Err(input_error("batch_size must be at least 1"));
        }
        if self.retry.max_attempts == 0 {
            return Err(input_error("retry.max_attempts must be at least 1"));
        }
        let mut ids = BTreeSet::new();
        for p in &self.providers {
            p.validate().map_err(input_error)?;
            if !ids.insert(p.provider_id.as_str()) {
                return Err(input_error(format!(
                    "duplicate provider_id {}",
                    p.provider_id
                )));
            }
        }
        Ok(())
    }

    pub fn prompt_spec(&self) -> CmdResult<PromptSpec> {
        PromptSpec::with_shots(self.prompt.shots, self.prompt.batch_size).input("prompt settings")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset.jsonl"))
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.predictions
            .clone()
            .unwrap_or_else(|| self.out_dir.join("predictions.csv"))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache
            .clone()
            .unwrap_or_else(|| self.out_dir.join("responses.cache"))
    }
}
