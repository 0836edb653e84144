use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, TryLockError};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, ScriptError, Usage};

/// One recorded exchange. Stored one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub index: usize,
    pub fingerprint: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayScript {
    pub records: Vec<ScriptRecord>,
}

impl ReplayScript {
    pub fn push(&mut self, fingerprint: impl Into<String>, response: impl Into<String>) {
        let index = self.records.len();
        self.records.push(ScriptRecord {
            index,
            fingerprint: fingerprint.into(),
            response: response.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord = serde_json::from_str(line).map_err(|e| ScriptError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
            if record.index != records.len() {
                return Err(ScriptError::Format {
                    line: line_no,
                    message: format!("expected index {}, found {}", records.len(), record.index),
                });
            }
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(record_line).collect()
    }
}

fn record_line(record: &ScriptRecord) -> String {
    let mut line = serde_json::to_string(record).expect("script records serialize");
    line.push('\n');
    line
}

pub fn load_script(path: impl AsRef<Path>) -> Result<ReplayScript, ScriptError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ReplayScript::parse(&text)
}

pub fn save_script(script: &ReplayScript, path: impl AsRef<Path>) -> Result<(), ScriptError> {
    let path = path.as_ref();
    std::fs::write(path, script.to_text()).map_err(|e| ScriptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Answers requests from a script, strictly in order.
#[derive(Debug)]
pub struct ReplayBackend {
    records: Vec<ScriptRecord>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(script: ReplayScript) -> Self {
        Self {
            records: script.records,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        load_script(path).map(Self::new)
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.consumed()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut cursor = match self.cursor.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => return Err(BackendError::ConcurrentUse),
            Err(TryLockError::Poisoned(e)) => e.into_inner(),
        };
        let index = *cursor;
        let record = self
            .records
            .get(index)
            .ok_or(BackendError::ScriptExhausted { index })?;
        let actual = request.fingerprint();
        if record.fingerprint != actual {
            return Err(BackendError::FingerprintMismatch {
                index,
                expected: record.fingerprint.clone(),
                actual,
            });
        }
        *cursor += 1;
        Ok(ChatResponse {
            content: record.response.clone(),
            usage: Usage::default(),
        })
    }
}

/// Wraps a backend and appends every successful exchange to a script file.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    state: Mutex<RecordingState>,
}

struct RecordingState {
    script: ReplayScript,
    out: BufWriter<File>,
}

/// Starts recording `inner` into a fresh script at `path`.
pub fn record_session<B: ChatBackend>(inner: B, path: impl AsRef<Path>) -> Result<RecordingBackend<B>, ScriptError> {
    let path = path.as_ref().to_path_buf();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&path)
        .map_err(|e| ScriptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(RecordingBackend {
        inner,
        path,
        state: Mutex::new(RecordingState {
            script: ReplayScript::default(),
            out: BufWriter::new(file),
        }),
    })
}

impl<B> RecordingBackend<B> {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn script(&self) -> ReplayScript {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).script.clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.script.push(request.fingerprint(), response.content.clone());
        let line = record_line(state.script.records.last().expect("just pushed"));
        let io = |e: std::io::Error| ScriptError::Io {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        state.out.write_all(line.as_bytes()).map_err(io)?;
        state.out.flush().map_err(io)?;
        Ok(response)
    }
}
