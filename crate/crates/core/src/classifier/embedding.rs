use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::ingest::{Backoff, PlatformError};

/// Dimension of the built-in offline provider.
pub const LOCAL_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ClassifierError> {
        if values.is_empty() {
            return Err(ClassifierError::InvalidInput("embedding has zero dimensions".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidInput(format!(
                "embedding component {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = ClassifierError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// `u·v / (|u||v|)`, clamped into `[-1, 1]` against rounding.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, ClassifierError> {
    if u.dim() != v.dim() {
        return Err(ClassifierError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(ClassifierError::InvalidInput("zero-norm embedding".into()));
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in model files.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<EmbeddingVector, ClassifierError>;
}

/// Embeds `text`, rejecting blank input before it reaches the provider.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, ClassifierError> {
    if text.trim().is_empty() {
        return Err(ClassifierError::InvalidInput("text is empty".into()));
    }
    let v = provider.embed_raw(text)?;
    if v.dim() != provider.dim() {
        return Err(ClassifierError::TransientProvider(format!(
            "provider returned {} dimensions, expected {}",
            v.dim(),
            provider.dim()
        )));
    }
    Ok(v)
}

/// Offline provider: lowercase word counts hashed into `dim` buckets with
/// FNV-1a, then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self { dim: LOCAL_DIM }
    }
}

impl HashedBagOfWords {
    pub fn with_dim(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedBagOfWords {
    fn tag(&self) -> String {
        format!("local-hashed-bow-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<EmbeddingVector, ClassifierError> {
        let mut values = vec![0.0; self.dim];
        let mut any = false;
        for token in text
            .split(|c: char| !(c.is_alphanumeric() || c == '#'))
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let bucket = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
            values[bucket] += 1.0;
            any = true;
        }
        if !any {
            return Err(ClassifierError::InvalidInput(
                "text contains no word tokens".into(),
            ));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        EmbeddingVector::new(values)
    }
}

/// OpenAI-compatible `/embeddings` endpoint. Reads `EMBEDDING_API_KEY`,
/// and optionally `EMBEDDING_API_BASE` / `EMBEDDING_MODEL` / `EMBEDDING_DIM`.
pub struct RemoteEmbeddingProvider {
    http: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    model: String,
    dim: usize,
    backoff: Backoff,
}

impl RemoteEmbeddingProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            http: reqwest::blocking::Client::new(),
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            dim,
            backoff: Backoff::default(),
        }
    }

    pub fn from_env() -> Result<Self, ClassifierError> {
        let key = std::env::var("EMBEDDING_API_KEY")
            .map_err(|_| ClassifierError::TransientProvider("EMBEDDING_API_KEY is not set".into()))?;
        let base = std::env::var("EMBEDDING_API_BASE").unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let model = std::env::var("EMBEDDING_MODEL").unwrap_or_else(|_| "text-embedding-ada-002".into());
        let dim = std::env::var("EMBEDDING_DIM")
            .ok()
            .and_then(|d| d.parse().ok())
            .unwrap_or(1536);
        Ok(Self::new(base, key, model, dim))
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn tag(&self) -> String {
        format!("remote-{}", self.model)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<EmbeddingVector, ClassifierError> {
        use crate::ingest::{classify_status, transport};
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.model, "input": text });
        let resp = self
            .backoff
            .run(|| {
                let resp = self
                    .http
                    .post(&url)
                    .bearer_auth(&self.api_key)
                    .json(&body)
                    .send()
                    .map_err(transport)?;
                classify_status(resp)
            })
            .map_err(|e: PlatformError| ClassifierError::TransientProvider(e.to_string()))?;
        let parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| ClassifierError::TransientProvider(e.to_string()))?;
        let first = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| ClassifierError::TransientProvider("empty embedding response".into()))?;
        EmbeddingVector::new(first.embedding)
    }
}
