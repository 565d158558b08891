//! Report generation backends: a deterministic rule-based mock and a
//! chat-completion HTTP client.

mod mock;
mod remote;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::GenerationRequest;

pub use mock::{mock_generate, MockBackend, MOCK_TAG};
pub use remote::{remote_generate, request_body, RemoteBackend, API_KEY_ENV};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_attempts() -> u32 {
    5
}
fn default_parallelism() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    /// Per-attempt timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// Bound on in-flight requests during evaluation.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model: None,
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            parallelism: default_parallelism(),
            backoff_base_ms: default_backoff_ms(),
        }
    }
}

impl BackendConfig {
    pub fn remote(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            base_url: Some(base_url.into()),
            model: Some(model.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_attempts < 1 {
            return Err(BackendError::Config("max_attempts must be >= 1".into()));
        }
        if self.parallelism < 1 {
            return Err(BackendError::Config("parallelism must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::Config("timeout_secs must be positive".into()));
        }
        if self.kind == BackendKind::Remote && (self.base_url.is_none() || self.model.is_none())
        {
            return Err(BackendError::Config(
                "remote backend requires base_url and model".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend_tag: String,
    pub attempts: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s) (last status {status:?}): {message}")]
    Transport {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("protocol error (status {status:?}, attempt {attempts}): {message}")]
    Protocol {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("request timed out on each of {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn attempts(&self) -> u32 {
        match self {
            BackendError::Transport { attempts, .. }
            | BackendError::Protocol { attempts, .. }
            | BackendError::Timeout { attempts } => *attempts,
            BackendError::Config(_) => 0,
        }
    }
}

pub trait Backend: Send + Sync {
    fn tag(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<CompletionResult, BackendError>;
    /// Whether unknown severity tokens should be tolerated when parsing
    /// this backend's output.
    fn lenient_by_default(&self) -> bool;
}

/// Build the configured backend. `seed` keys the retry jitter stream.
pub fn build_backend(config: &BackendConfig, seed: u64) -> Result<Box<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Mock => Box::new(MockBackend::default()),
        BackendKind::Remote => Box::new(RemoteBackend::from_env(config.clone(), seed)?),
    })
}
