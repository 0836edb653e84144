use std::fmt;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tracing::warn;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Usage};

/// Environment variable holding the chat-endpoint credential.
pub const API_KEY_ENV: &str = "MANDEL_API_KEY";

/// A credential that never prints itself.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(Self)
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }

    /// Replaces every occurrence of the credential in `text`.
    pub fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "[REDACTED]")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

/// Retries on transport-level failures only, with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub request_timeout: Duration,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            request_timeout: Duration::from_secs(600),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    released: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// Chat backend speaking the common `messages` JSON schema over HTTP.
pub struct LiveBackend {
    config: LiveConfig,
    key: ApiKey,
    client: reqwest::blocking::Client,
    slots: Slots,
}

impl fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveBackend")
            .field("endpoint", &self.config.endpoint)
            .field("key", &self.key)
            .finish()
    }
}

impl LiveBackend {
    pub fn new(config: LiveConfig, key: ApiKey) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let slots = Slots::new(config.max_in_flight);
        Ok(Self { config, key, client, slots })
    }

    pub fn from_env(config: LiveConfig) -> Result<Self, BackendError> {
        let key = ApiKey::from_env()
            .ok_or_else(|| BackendError::Auth(format!("environment variable {API_KEY_ENV} is not set")))?;
        Self::new(config, key)
    }

    fn body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, BackendError> {
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(self.key.expose())
            .json(body)
            .send()
            .map_err(|e| BackendError::Transport(self.key.redact(&e.to_string())))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(self.key.redact(&e.to_string())))?;
        let text = self.key.redact(&text);
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}")));
        }
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transport(format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        if !status.is_success() {
            return Err(BackendError::InvalidRequest(format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        parse_completion(&text)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_completion(text: &str) -> Result<ChatResponse, BackendError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::Transport(format!("malformed completion body: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default();
    if content.trim().is_empty() {
        return Err(BackendError::EmptyResponse);
    }
    let count = |p: &str| value.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        content: content.to_string(),
        usage: Usage {
            prompt_tokens: count("/usage/prompt_tokens"),
            completion_tokens: count("/usage/completion_tokens"),
        },
    })
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = Self::body(request);
        let _slot = self.slots.acquire();
        let attempts = self.config.retry.attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_transient() && attempt < attempts => {
                    let delay = self.config.retry.delay_before(attempt);
                    warn!(agent = %request.agent, attempt, error = %e, "retrying chat completion");
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_never_prints() {
        let key = ApiKey::new("sk-secret-123");
        assert_eq!(format!("{key:?}"), "ApiKey(***)");
        let backend = LiveBackend::new(LiveConfig::default(), key.clone()).unwrap();
        assert!(!format!("{backend:?}").contains("sk-secret"));
        assert_eq!(key.redact("token sk-secret-123 here"), "token [REDACTED] here");
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(1), Duration::from_secs(1));
        assert_eq!(p.delay_before(2), Duration::from_secs(2));
    }

    #[test]
    fn completion_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;
        let r = parse_completion(ok).unwrap();
        assert_eq!(r.content, "hi");
        assert_eq!(r.usage, Usage { prompt_tokens: 3, completion_tokens: 1 });
        let empty = r#"{"choices":[{"message":{"content":""}}]}"#;
        assert_eq!(parse_completion(empty), Err(BackendError::EmptyResponse));
    }
}
