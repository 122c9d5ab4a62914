//! Chat-completion clients.
//!
//! The wire format is the de-facto JSON chat-completion interface:
//! `POST {base_url}/chat/completions` with `{model, messages, temperature}`,
//! answer read from `choices[0].message.content`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::prompt::Prompt;

#[derive(Debug, Error)]
pub enum LlmError {
    /// Aborts the run; never degraded to a fallback.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Response(String),
}

impl LlmError {
    pub fn is_config(&self) -> bool {
        matches!(self, LlmError::Config(_))
    }
}

pub trait ChatClient: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatEndpointConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the API key. Empty means
    /// the endpoint needs no authorization header.
    #[serde(default)]
    pub api_key_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub temperature: f64,
    /// Delay before the first retry; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> u64 {
    500
}

impl Default for ChatEndpointConfig {
    fn default() -> Self {
        Self::new("", "")
    }
}

impl ChatEndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env_var: String::new(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_concurrent_requests: default_concurrency(),
            temperature: 0.0,
            retry_backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base_url is empty".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(LlmError::Config(format!(
                "timeout_secs must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.max_concurrent_requests == 0 {
            return Err(LlmError::Config(
                "max_concurrent_requests must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!(
                "temperature must be nonnegative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key(&self) -> Result<Option<String>, LlmError> {
        if self.api_key_env_var.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.api_key_env_var) {
            Ok(v) if !v.is_empty() => Ok(Some(v)),
            _ => Err(LlmError::Config(format!(
                "environment variable {} is not set",
                self.api_key_env_var
            ))),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.retry_backoff_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
        }
    }

    /// Calls `client` up to `max_retries + 1` times with exponential backoff.
    /// Configuration errors are returned immediately.
    pub fn complete(&self, client: &dyn ChatClient, prompt: &Prompt) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match client.complete(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_config() || attempt >= self.max_retries => return Err(e),
                Err(_) => {
                    let delay = self.base_delay.saturating_mul(1u32 << attempt.min(16));
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
            }
        }
    }
}

pub struct HttpChatClient {
    config: ChatEndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("base_url", &self.config.base_url)
            .field("model_name", &self.config.model_name)
            .finish()
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: ChatEndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = config.api_key()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    pub fn config(&self) -> &ChatEndpointConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ChatClient for HttpChatClient {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &prompt.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt.user}));
        let body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let mut req = self.agent.post(self.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Status { status, body });
        }
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Response("no choices[0].message.content".into()))
    }
}
