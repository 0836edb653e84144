use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::llmbackend::ApiKey;

use super::AnalyticsError;

pub const OFFLINE_DIMENSION: usize = 256;

/// Row-major `n x d` matrix, one row per text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, AnalyticsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AnalyticsError::RaggedMatrix);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, AnalyticsError>;
}

/// Deterministic feature hashing of word unigrams and bigrams with a
/// hashed sign, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct OfflineEmbedder {
    pub dimension: usize,
}

impl Default for OfflineEmbedder {
    fn default() -> Self {
        Self {
            dimension: OFFLINE_DIMENSION,
        }
    }
}

impl OfflineEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut row = vec![0.0; self.dimension];
        let mut add = |feature: &str| {
            let digest = Sha256::digest(feature.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) % self.dimension as u64;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            row[bucket as usize] += sign;
        };
        for w in &words {
            add(w);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        row
    }
}

impl Embedder for OfflineEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, AnalyticsError> {
        EmbeddingMatrix::new(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Remote embedding endpoint speaking the common `{model, input}` schema.
pub struct LiveEmbedder {
    endpoint: String,
    model: String,
    key: ApiKey,
    client: reqwest::blocking::Client,
}

impl LiveEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, key: ApiKey) -> Result<Self, AnalyticsError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| AnalyticsError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            key,
            client,
        })
    }
}

impl Embedder for LiveEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, AnalyticsError> {
        if texts.is_empty() {
            return EmbeddingMatrix::new(Vec::new());
        }
        let transport = |e: reqwest::Error| AnalyticsError::Transport(self.key.redact(&e.to_string()));
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(self.key.expose())
            .json(&json!({"model": self.model, "input": texts}))
            .send()
            .map_err(transport)?;
        let status = response.status();
        let body: Value = response.json().map_err(transport)?;
        if !status.is_success() {
            return Err(AnalyticsError::Transport(format!("HTTP {status}")));
        }
        let data = body
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| AnalyticsError::Transport("response has no `data` array".into()))?;
        let mut rows = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vector = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| AnalyticsError::Transport("item without `embedding`".into()))?;
            let slot = rows
                .get_mut(index)
                .ok_or_else(|| AnalyticsError::Transport(format!("embedding index {index} out of range")))?;
            *slot = vector.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
        }
        EmbeddingMatrix::new(rows)
    }
}
