//! Embedding providers and the content-addressed embedding cache.

use std::collections::{HashMap, HashSet};
use std::hash::Hasher;
use std::sync::Mutex;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::tokenize::tokenize;
use crate::retry::{post_json, with_backoff, RetryPolicy};

pub const LOCAL_HASH_DIMENSION: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either vector is zero or dimensions differ.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.dimension() != b.dimension() {
        return 0.0;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.components.iter().zip(&b.components) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("embedding request failed: {0}")]
    Request(String),
    #[error("malformed embedding response: {0}")]
    Protocol(String),
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies provider and model; part of every cache key.
    fn id(&self) -> String;

    fn batch_limit(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

/// Deterministic offline embedder: hashed token counts, L2-normalised.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dimension: usize,
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self::new(LOCAL_HASH_DIMENSION)
    }
}

impl LocalHashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dimension];
        for tok in tokenize(text) {
            let mut h = FnvHasher::default();
            h.write(tok.as_bytes());
            v[(h.finish() % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in &mut v {
                *c /= norm;
            }
        }
        EmbeddingVector::new(v)
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn id(&self) -> String {
        format!("local-hash/{}", self.dimension)
    }

    fn batch_limit(&self) -> usize {
        usize::MAX
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Remote provider speaking the common `{"input": [...], "model": m}` protocol.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote/{}", self.model)
    }

    fn batch_limit(&self) -> usize {
        self.batch_size.max(1)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let body = json!({ "input": texts, "model": self.model });
        let value = with_backoff(&self.retry, |_| {
            post_json(&self.url, self.api_key.as_deref(), &body, self.timeout)
        })
        .map_err(|e| ProviderError::Request(e.to_string()))?;
        let mut resp: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.iter().enumerate().any(|(k, d)| d.index != k) {
            return Err(ProviderError::Protocol("indices are not 0..n".into()));
        }
        Ok(resp
            .data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding))
            .collect())
    }
}

/// Content-addressed store of embedding vectors.
///
/// Implementations must tolerate concurrent `get`/`put` from several threads.
pub trait EmbeddingCache: Send + Sync {
    fn get(&self, key: &str) -> Option<EmbeddingVector>;
    fn put(&self, key: &str, vector: &EmbeddingVector);
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: Mutex<HashMap<String, EmbeddingVector>>,
}

impl EmbeddingCache for MemoryCache {
    fn get(&self, key: &str) -> Option<EmbeddingVector> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    fn put(&self, key: &str, vector: &EmbeddingVector) {
        self.entries
            .lock()
            .unwrap()
            .insert(key.to_string(), vector.clone());
    }
}

/// Cache key of `text` under `provider_id`.
pub fn cache_key(provider_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider failed on inputs {indices:?}: {source}")]
    Provider {
        indices: Vec<usize>,
        #[source]
        source: ProviderError,
    },
    #[error("provider returned {got} vectors for {expected} inputs (inputs {indices:?})")]
    Count {
        expected: usize,
        got: usize,
        indices: Vec<usize>,
    },
}

/// Embeds every text, consulting `cache` first and batching the misses.
pub fn embed(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    cache: &dyn EmbeddingCache,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let pid = provider.id();
    let keys: Vec<String> = texts.iter().map(|t| cache_key(&pid, t)).collect();
    let mut resolved: HashMap<&str, EmbeddingVector> = HashMap::new();
    // misses in first-occurrence order, with the input positions they cover
    let mut misses: Vec<(usize, &str)> = Vec::new();
    let mut pending: HashSet<&str> = HashSet::new();
    for (k, key) in keys.iter().enumerate() {
        if resolved.contains_key(key.as_str()) || !pending.insert(key) {
            continue;
        }
        match cache.get(key) {
            Some(v) => {
                resolved.insert(key, v);
            }
            None => misses.push((k, key)),
        }
    }
    for batch in misses.chunks(provider.batch_limit().max(1)) {
        let inputs: Vec<String> = batch.iter().map(|(k, _)| texts[*k].clone()).collect();
        let indices: Vec<usize> = batch.iter().map(|(k, _)| *k).collect();
        let vectors = provider
            .embed_batch(&inputs)
            .map_err(|source| EmbedError::Provider {
                indices: indices.clone(),
                source,
            })?;
        if vectors.len() != inputs.len() {
            return Err(EmbedError::Count {
                expected: inputs.len(),
                got: vectors.len(),
                indices,
            });
        }
        for ((_, key), v) in batch.iter().zip(vectors) {
            cache.put(key, &v);
            resolved.insert(key, v);
        }
    }
    Ok(keys.iter().map(|k| resolved[k.as_str()].clone()).collect())
}
