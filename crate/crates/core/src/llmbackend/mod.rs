//! Chat-completion backends.
//!
//! The orchestration layer only sees [`ChatBackend`]. Three implementations
//! exist: [`LiveBackend`] talks to a JSON-over-HTTP chat endpoint,
//! [`ReplayBackend`] answers from a recorded script, and [`RecordingBackend`]
//! wraps any backend and captures its exchanges into a replayable script.

mod live;
mod replay;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{ApiKey, LiveBackend, LiveConfig, RetryPolicy, API_KEY_ENV};
pub use replay::{
    load_script, record_session, save_script, RecordingBackend, ReplayBackend, ReplayScript,
    ScriptRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

/// One completion request.
///
/// `agent` names the calling agent; it is not sent over the wire but becomes
/// part of the replay fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub agent: String,
    pub messages: Vec<ChatMessage>,
    pub model_name: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(
        agent: impl Into<String>,
        messages: Vec<ChatMessage>,
        model_name: impl Into<String>,
        temperature: f64,
    ) -> Result<Self, BackendError> {
        match messages.first() {
            None => return Err(BackendError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role != ChatRole::System => {
                return Err(BackendError::InvalidRequest("first message must be system-tagged".into()))
            }
            _ => {}
        }
        if !(temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!("temperature {temperature} is negative")));
        }
        Ok(Self {
            agent: agent.into(),
            messages,
            model_name: model_name.into(),
            temperature,
        })
    }

    /// `<agent>/<role of last message>`; the sequence index is tracked by the script.
    pub fn fingerprint(&self) -> String {
        let last = self.messages.last().map_or("none", |m| m.role.as_str());
        format!("{}/{}", self.agent, last)
    }

    /// All message contents joined, for context audits.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("replay script exhausted at exchange {index}")]
    ScriptExhausted { index: usize },
    #[error("fingerprint mismatch at exchange {index}: script has `{expected}`, request is `{actual}`")]
    FingerprintMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("replay backend used concurrently")]
    ConcurrentUse,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("script file: {0}")]
    Script(#[from] ScriptError),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl fmt::Display for ChatRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} messages)", self.fingerprint(), self.messages.len())
    }
}
