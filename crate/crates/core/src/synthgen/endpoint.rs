use std::io::Read;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompts::PromptText;

/// Environment variable holding the bearer token for the generation endpoint.
pub const API_KEY_ENV: &str = "DOCFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    /// Worth retrying: connection problems, timeouts, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("response of {size} bytes exceeds cap of {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("{0}")]
    Fatal(String),
}

pub trait GenerationEndpoint: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError>;
}

impl<F> GenerationEndpoint for F
where
    F: Fn(&str) -> Result<String, EndpointError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        self(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

/// JSON-over-HTTP text generation endpoint.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_response_bytes: usize,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        let timeout = Duration::from_secs(120);
        Self {
            url: url.into(),
            model: model.into(),
            max_tokens: 2048,
            temperature: 0.7,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout,
            max_response_bytes: 1 << 20,
            agent: build_agent(timeout),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self.agent = build_agent(timeout);
        self
    }
}

fn build_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

impl GenerationEndpoint for HttpEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        let body = serde_json::to_string(&CompletionRequest {
            model: &self.model,
            prompt,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        })
        .map_err(|e| EndpointError::Fatal(e.to_string()))?;
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.as_str()).map_err(|e| EndpointError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        // read one byte past the cap so oversize bodies are detectable
        let cap = self.max_response_bytes;
        let mut raw = Vec::new();
        resp.body_mut()
            .as_reader()
            .take(cap as u64 + 1)
            .read_to_end(&mut raw)
            .map_err(|e| EndpointError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(EndpointError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(EndpointError::Transient(format!("HTTP {status}"))),
            _ => return Err(EndpointError::Fatal(format!("HTTP {status}"))),
        }
        if raw.len() > cap {
            return Err(EndpointError::TooLarge { size: raw.len(), cap });
        }
        let parsed: CompletionResponse =
            serde_json::from_slice(&raw).map_err(|e| EndpointError::Fatal(format!("bad response body: {e}")))?;
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub max_response_bytes: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            max_response_bytes: 1 << 20,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Prompt and response kept together for provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt: PromptText,
    pub response: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error("generation failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("response of {size} bytes exceeds cap of {cap}")]
    ResponseTooLarge { size: usize, cap: usize },
    #[error("generation failed: {0}")]
    Fatal(String),
}

/// Calls the endpoint, retrying transient failures with exponential backoff.
pub fn request_generation(
    endpoint: &dyn GenerationEndpoint,
    prompt: &PromptText,
    policy: &RetryPolicy,
) -> Result<GenerationRecord, GenerationError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match endpoint.complete(&prompt.text) {
            Ok(text) if text.len() > policy.max_response_bytes => {
                return Err(GenerationError::ResponseTooLarge {
                    size: text.len(),
                    cap: policy.max_response_bytes,
                })
            }
            Ok(text) => {
                return Ok(GenerationRecord {
                    prompt: prompt.clone(),
                    response: text,
                    attempts: attempt,
                })
            }
            Err(EndpointError::Transient(msg)) => {
                if attempt > policy.max_retries {
                    return Err(GenerationError::RetriesExhausted {
                        attempts: attempt,
                        last: msg,
                    });
                }
                log::warn!("generation attempt {attempt} failed: {msg}; retrying");
                std::thread::sleep(policy.backoff(attempt - 1));
            }
            Err(EndpointError::Auth(msg)) => return Err(GenerationError::Auth(msg)),
            Err(EndpointError::TooLarge { size, cap }) => {
                return Err(GenerationError::ResponseTooLarge { size, cap })
            }
            Err(EndpointError::Fatal(msg)) => return Err(GenerationError::Fatal(msg)),
        }
    }
}
