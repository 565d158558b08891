//! Blocking chat-completion client with bounded, jittered retries.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Backend, BackendConfig, BackendError, BackendKind, CompletionResult};
use crate::cot::{GenerationRequest, Role};
use crate::rng::SplitMix64;

pub const API_KEY_ENV: &str = "XRAYCOT_API_KEY";
const MAX_BACKOFF_MS: u64 = 30_000;

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireBody<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

/// Exact JSON body sent for `request`; stable for equal inputs.
pub fn request_body(request: &GenerationRequest, config: &BackendConfig) -> String {
    let body = WireBody {
        model: config.model.as_deref().unwrap_or(""),
        messages: request
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.role {
                    Role::System => "system",
                    Role::User => "user",
                },
                content: &m.content,
            })
            .collect(),
        temperature: config.temperature,
    };
    serde_json::to_string(&body).expect("wire body serializes")
}

fn extract_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    let text = v["choices"][0]["message"]["content"].as_str()?;
    (!text.is_empty()).then(|| text.to_string())
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fail(BackendError),
}

fn attempt(
    agent: &ureq::Agent,
    url: &str,
    body: &str,
    credential: Option<&str>,
    n: u32,
) -> Attempt {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = credential {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = match req.send(body) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout { attempts: n }),
        Err(e) => {
            return Attempt::Retry(BackendError::Transport {
                status: None,
                attempts: n,
                message: e.to_string(),
            })
        }
    };
    let status = resp.status().as_u16();
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout { attempts: n }),
        Err(e) => {
            return Attempt::Retry(BackendError::Transport {
                status: Some(status),
                attempts: n,
                message: e.to_string(),
            })
        }
    };
    match status {
        200..=299 => match extract_content(&text) {
            Some(content) => Attempt::Done(content),
            None => Attempt::Fail(BackendError::Protocol {
                status: Some(status),
                attempts: n,
                message: "response lacks choices[0].message.content".into(),
            }),
        },
        429 | 500..=599 => Attempt::Retry(BackendError::Transport {
            status: Some(status),
            attempts: n,
            message: truncate(&text),
        }),
        _ => Attempt::Fail(BackendError::Protocol {
            status: Some(status),
            attempts: n,
            message: truncate(&text),
        }),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// POST the request, retrying 429, 5xx, timeouts and connection failures
/// with full-jitter exponential backoff. Other statuses fail at once.
pub fn remote_generate(
    request: &GenerationRequest,
    config: &BackendConfig,
    credential: Option<&str>,
) -> Result<CompletionResult, BackendError> {
    let jitter_seed = SplitMix64::for_purpose(0, "backoff").next();
    RemoteBackend::new(config.clone(), credential.map(String::from), jitter_seed)?
        .generate(request)
}

pub struct RemoteBackend {
    config: BackendConfig,
    credential: Option<String>,
    agent: ureq::Agent,
    tag: String,
    jitter_seed: u64,
}

impl RemoteBackend {
    pub fn new(
        config: BackendConfig,
        credential: Option<String>,
        jitter_seed: u64,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        if config.kind != BackendKind::Remote {
            return Err(BackendError::Config("backend kind is not remote".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let tag = format!("remote:{}", config.model.as_deref().unwrap_or(""));
        Ok(Self {
            config,
            credential,
            agent,
            tag,
            jitter_seed,
        })
    }

    /// Credential taken from the `XRAYCOT_API_KEY` environment variable.
    pub fn from_env(config: BackendConfig, jitter_seed: u64) -> Result<Self, BackendError> {
        let credential = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, credential, jitter_seed)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn backoff(&self, rng: &mut SplitMix64, retry: u32) -> Duration {
        let cap = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(MAX_BACKOFF_MS);
        Duration::from_millis(rng.below(cap + 1))
    }
}

impl Backend for RemoteBackend {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn generate(&self, request: &GenerationRequest) -> Result<CompletionResult, BackendError> {
        let base = self.config.base_url.as_deref().unwrap_or("");
        let url = format!("{}/v1/chat/completions", base.trim_end_matches('/'));
        let body = request_body(request, &self.config);
        let mut rng = SplitMix64::for_purpose(self.jitter_seed, &request.metadata.sample_id);
        let start = Instant::now();
        let mut last = None;
        for n in 1..=self.config.max_attempts {
            match attempt(&self.agent, &url, &body, self.credential.as_deref(), n) {
                Attempt::Done(text) => {
                    return Ok(CompletionResult {
                        text,
                        backend_tag: self.tag.clone(),
                        attempts: n,
                        latency_ms: start.elapsed().as_millis() as u64,
                    })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    last = Some(e);
                    if n < self.config.max_attempts {
                        std::thread::sleep(self.backoff(&mut rng, n - 1));
                    }
                }
            }
        }
        Err(last.expect("max_attempts >= 1"))
    }

    fn lenient_by_default(&self) -> bool {
        true
    }
}
