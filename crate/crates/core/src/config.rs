//! Line-oriented `key=value` configuration with environment-variable
//! overrides. Credentials never live here, only the names of the
//! environment variables that hold them.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::extractor::LocalKnowledgeConfig;
use crate::semantic::{ProviderEndpoint, RetryPolicy, DEFAULT_EMBED_DIM};

pub const ENV_PREFIX: &str = "REPOGEN_";

pub const DEFAULT_EXCLUDES: &[&str] = &[
    ".git",
    "__pycache__",
    "venv",
    ".venv",
    "node_modules",
    "build",
    "dist",
];

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone)]
pub struct Config {
    pub offline: bool,
    pub chat: ProviderEndpoint,
    pub embed: ProviderEndpoint,
    /// Transcript file replayed by the mock chat provider in offline mode.
    pub chat_transcript: Option<PathBuf>,
    pub embed_dim: usize,
    pub k: usize,
    pub local_knowledge: LocalKnowledgeConfig,
    pub exclude: Vec<String>,
    pub max_prompt_chars: usize,
    pub in_flight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub summary_cache: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            offline: true,
            chat: ProviderEndpoint::default(),
            embed: ProviderEndpoint {
                model: "text-embedding-ada-002".to_string(),
                ..ProviderEndpoint::default()
            },
            chat_transcript: None,
            embed_dim: DEFAULT_EMBED_DIM,
            k: DEFAULT_K,
            local_knowledge: LocalKnowledgeConfig::default(),
            exclude: DEFAULT_EXCLUDES.iter().map(|s| s.to_string()).collect(),
            max_prompt_chars: crate::promptgen::DEFAULT_MAX_PROMPT_CHARS,
            in_flight: 4,
            max_retries: 3,
            backoff_ms: 250,
            summary_cache: None,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Contract(format!(
            "config key {key}: expected boolean, got {other:?}"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Contract(format!("config key {key}: invalid number {value:?}")))
}

impl Config {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_backoff_ms: self.backoff_ms,
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "offline" => self.offline = parse_bool(key, value)?,
            "chat_base_url" => self.chat.base_url = value.to_string(),
            "chat_model" => self.chat.model = value.to_string(),
            "chat_credential_env" => {
                self.chat.credential_env = (!value.is_empty()).then(|| value.to_string())
            }
            "chat_transcript" => {
                self.chat_transcript = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "temperature" => self.chat.temperature = parse_num(key, value)?,
            "timeout_secs" => {
                self.chat.timeout_secs = parse_num(key, value)?;
                self.embed.timeout_secs = self.chat.timeout_secs;
            }
            "embed_base_url" => self.embed.base_url = value.to_string(),
            "embed_model" => self.embed.model = value.to_string(),
            "embed_credential_env" => {
                self.embed.credential_env = (!value.is_empty()).then(|| value.to_string())
            }
            "embed_dim" => self.embed_dim = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "local_functions" => self.local_knowledge.local_functions = parse_bool(key, value)?,
            "class_instance_attributes" => {
                self.local_knowledge.class_instance_attributes = parse_bool(key, value)?
            }
            "module_fqn" => self.local_knowledge.module_fqn = parse_bool(key, value)?,
            "module_variables" => self.local_knowledge.module_variables = parse_bool(key, value)?,
            "exclude" => {
                self.exclude = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "max_prompt_chars" => self.max_prompt_chars = parse_num(key, value)?,
            "in_flight" => self.in_flight = parse_num(key, value)?,
            "max_retries" => self.max_retries = parse_num(key, value)?,
            "backoff_ms" => self.backoff_ms = parse_num(key, value)?,
            "summary_cache" => {
                self.summary_cache = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            other => {
                return Err(Error::Contract(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Config::default();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            config.apply(key.trim(), value.trim())?;
        }
        config.apply_env()?;
        Ok(config)
    }

    /// Environment overrides: `REPOGEN_<UPPERCASED_KEY>`.
    pub fn apply_env(&mut self) -> Result<()> {
        const KEYS: &[&str] = &[
            "offline",
            "chat_base_url",
            "chat_model",
            "chat_credential_env",
            "chat_transcript",
            "temperature",
            "timeout_secs",
            "embed_base_url",
            "embed_model",
            "embed_credential_env",
            "embed_dim",
            "k",
            "local_functions",
            "class_instance_attributes",
            "module_fqn",
            "module_variables",
            "exclude",
            "max_prompt_chars",
            "in_flight",
            "max_retries",
            "backoff_ms",
            "summary_cache",
        ];
        for key in KEYS {
            let env_name = format!("{ENV_PREFIX}{}", key.to_uppercase());
            if let Ok(value) = std::env::var(&env_name) {
                self.apply(key, &value)?;
            }
        }
        Ok(())
    }
}
