//! Text-to-vector providers: a remote HTTP model, a deterministic mock, and
//! a persistent cache in front of either.

mod cache;
mod http;
mod mock;
mod vector;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, decode_vector, encode_vector, EmbeddingCache};
pub(crate) use cache::write_atomic;
pub use http::HttpEmbedder;
pub(crate) use http::{http_agent, post_json};
pub(crate) use mock::splitmix64;
pub use mock::{mock_components, mock_embed, MockEmbedder};
pub use vector::{cosine_distance, EmbeddingVector};
pub(crate) use vector::{cosine_distance_slices, dot};

use crate::error::{Error, Result};

pub const WEB_SEARCH_INSTRUCTION: &str = "Instruct: Given a web search query, retrieve relevant passages that answer the query\nQuery: {query}";
pub const NARRATIVE_INSTRUCTION: &str = "Instruct: Given a narrative description as a query, retrieve passages that serve this narrative; can be entailed from the narrative; can be aligned logically with the narrative\nQuery: {query}";
pub const HYDE_INSTRUCTION: &str = "Instruct: Given a text as a query retrieve relevant passages that align with narratives similar to the query\nQuery: {query}";

/// Renders an instruction template around `text`. Templates without a
/// `{query}` placeholder are used as a plain prefix.
pub fn apply_instruction(instruction: &str, text: &str) -> String {
    if instruction.is_empty() {
        text.to_string()
    } else if instruction.contains("{query}") {
        instruction.replace("{query}", text)
    } else {
        format!("{instruction}{text}")
    }
}

/// A model that turns a batch of texts into raw vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn model(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub instruction: String,
    pub batch_size: usize,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub dimension: usize,
    pub max_in_flight: usize,
    pub api_key_env: String,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "http://localhost:8080/v1/embeddings".into(),
            model: "Qwen/Qwen3-Embedding-4B".into(),
            instruction: NARRATIVE_INSTRUCTION.into(),
            batch_size: 32,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            dimension: 2560,
            max_in_flight: 4,
            api_key_env: "SPECFI_API_KEY".into(),
            backoff_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if self.dimension < 2 {
            return Err(Error::InvalidInput("dimension must be >= 2".into()));
        }
        Ok(())
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

/// Runs `op` up to `1 + max_retries` times with exponential backoff on retryable errors.
pub(crate) fn with_retries<T>(
    max_retries: u32,
    backoff_ms: u64,
    mut op: impl FnMut() -> Result<T>,
) -> Result<T> {
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt <= max_retries => {
                let delay = backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                warn!("attempt {attempt} failed ({e}); retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
            }
            Err(Error::Provider { message, .. }) => {
                return Err(Error::Provider {
                    attempts: attempt,
                    message,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Cache-fronted embedder that validates, normalizes and batches.
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Arc<EmbeddingCache>,
    batch_size: usize,
    max_in_flight: usize,
    max_retries: u32,
    backoff_ms: u64,
    default_instruction: String,
    backend_calls: Arc<AtomicUsize>,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, cache: EmbeddingCache) -> Self {
        Embedder {
            backend,
            cache: Arc::new(cache),
            batch_size: 32,
            max_in_flight: 4,
            max_retries: 3,
            backoff_ms: 500,
            default_instruction: String::new(),
            backend_calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn mock(seed: u64, dimension: usize) -> Self {
        Self::new(Arc::new(MockEmbedder::new(seed, dimension)), EmbeddingCache::in_memory())
    }

    pub fn from_config(config: &ProviderConfig, cache: EmbeddingCache) -> Result<Self> {
        config.validate()?;
        Ok(Self::new(Arc::new(HttpEmbedder::new(config)), cache).with_config(config))
    }

    pub fn with_config(mut self, config: &ProviderConfig) -> Self {
        self.batch_size = config.batch_size.max(1);
        self.max_in_flight = config.max_in_flight.max(1);
        self.max_retries = config.max_retries;
        self.backoff_ms = config.backoff_ms;
        self.default_instruction = config.instruction.clone();
        self
    }

    pub fn with_default_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.default_instruction = instruction.into();
        self
    }

    pub fn model(&self) -> &str {
        self.backend.model()
    }

    pub fn dimension(&self) -> usize {
        self.backend.dimension()
    }

    /// Number of batches sent to the backend so far (cache misses only).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn default_instruction(&self) -> &str {
        &self.default_instruction
    }

    /// Embeds with the configured default instruction.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let instruction = self.default_instruction.clone();
        self.embed_with(texts, &instruction)
    }

    /// Embeds corpus-side texts, which carry no instruction.
    pub fn embed_documents(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.embed_with(texts, "")
    }

    pub fn embed_one(&self, text: &str, instruction: &str) -> Result<EmbeddingVector> {
        Ok(self
            .embed_with(&[text.to_string()], instruction)?
            .pop()
            .expect("one vector per text"))
    }

    /// One unit-normalized vector per text, in input order.
    pub fn embed_with(&self, texts: &[String], instruction: &str) -> Result<Vec<EmbeddingVector>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::InvalidInput(format!("text #{i} is empty")));
        }
        let model = self.backend.model().to_string();
        let keys: Vec<String> = texts
            .iter()
            .map(|t| cache_key(&model, instruction, t))
            .collect();

        let mut found: HashMap<usize, EmbeddingVector> = HashMap::new();
        let mut pending: Vec<(String, String)> = Vec::new();
        let mut seen = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if let Some(v) = self.cache.get(key)? {
                found.insert(i, v);
            } else if !seen.contains_key(key) {
                seen.insert(key.clone(), ());
                pending.push((key.clone(), apply_instruction(instruction, &texts[i])));
            }
        }

        if !pending.is_empty() {
            self.fetch(&pending)?;
        }

        keys.iter()
            .enumerate()
            .map(|(i, key)| match found.remove(&i) {
                Some(v) => Ok(v),
                None => self
                    .cache
                    .get(key)?
                    .ok_or_else(|| Error::Invariant(format!("cache miss after fetch for #{i}"))),
            })
            .collect()
    }

    fn fetch(&self, pending: &[(String, String)]) -> Result<()> {
        let batches: Vec<&[(String, String)]> = pending.chunks(self.batch_size).collect();
        for wave in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<()>> = thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| scope.spawn(move || self.fetch_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            results.into_iter().collect::<Result<Vec<()>>>()?;
        }
        Ok(())
    }

    fn fetch_batch(&self, batch: &[(String, String)]) -> Result<()> {
        let inputs: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
        let raw = with_retries(self.max_retries, self.backoff_ms, || {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.embed_batch(&inputs)
        })?;
        if raw.len() != inputs.len() {
            return Err(Error::InvalidInput(format!(
                "backend returned {} vectors for {} texts",
                raw.len(),
                inputs.len()
            )));
        }
        let expected = self.backend.dimension();
        for ((key, _), values) in batch.iter().zip(raw) {
            if values.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: values.len(),
                });
            }
            let v = EmbeddingVector::normalized_f32(values)?;
            self.cache.put(key, &v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Flaky {
        dim: usize,
        out_dim: usize,
        failures: Mutex<u32>,
        seen: Mutex<Vec<String>>,
    }

    impl EmbeddingBackend for Flaky {
        fn model(&self) -> &str {
            "flaky"
        }
        fn dimension(&self) -> usize {
            self.dim
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            self.seen.lock().unwrap().extend(texts.iter().cloned());
            let mut f = self.failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return Err(Error::Provider {
                    attempts: 1,
                    message: "boom".into(),
                });
            }
            Ok(texts
                .iter()
                .map(|t| mock_components(t, 0, self.out_dim))
                .collect())
        }
    }

    fn flaky(failures: u32, out_dim: usize) -> Arc<Flaky> {
        Arc::new(Flaky {
            dim: 8,
            out_dim,
            failures: Mutex::new(failures),
            seen: Mutex::new(Vec::new()),
        })
    }

    fn texts(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preserves_order_and_normalizes() {
        let e = Embedder::mock(1, 32);
        let out = e.embed_documents(&texts(&["a b", "c", "d e f"])).unwrap();
        assert_eq!(out.len(), 3);
        for (v, t) in out.iter().zip(["a b", "c", "d e f"]) {
            assert!(v.is_unit_normalized());
            assert!((v.norm() - 1.0).abs() < 1e-6);
            let direct = mock_embed(t, 1, 32);
            for (x, y) in v.values().iter().zip(direct.values()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cache_hit_skips_backend() {
        let e = Embedder::mock(1, 32);
        let first = e.embed_documents(&texts(&["same text"])).unwrap();
        let calls = e.backend_calls();
        let second = e.embed_documents(&texts(&["same text"])).unwrap();
        assert_eq!(e.backend_calls(), calls);
        assert_eq!(first, second);
    }

    #[test]
    fn instruction_is_rendered_and_keyed() {
        let backend = flaky(0, 8);
        let e = Embedder::new(backend.clone(), EmbeddingCache::in_memory());
        let a = e.embed_with(&texts(&["q"]), "Instruct: x\nQuery: {query}").unwrap();
        let b = e.embed_with(&texts(&["q"]), "").unwrap();
        assert_ne!(a, b);
        assert_eq!(
            *backend.seen.lock().unwrap(),
            vec!["Instruct: x\nQuery: q".to_string(), "q".to_string()]
        );
    }

    #[test]
    fn retries_then_succeeds() {
        let backend = flaky(2, 8);
        let e = Embedder::new(backend, EmbeddingCache::in_memory()).with_config(&ProviderConfig {
            backoff_ms: 1,
            dimension: 8,
            ..Default::default()
        });
        assert_eq!(e.embed_documents(&texts(&["x"])).unwrap().len(), 1);
        assert_eq!(e.backend_calls(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let backend = flaky(10, 8);
        let e = Embedder::new(backend, EmbeddingCache::in_memory()).with_config(&ProviderConfig {
            backoff_ms: 1,
            max_retries: 3,
            dimension: 8,
            ..Default::default()
        });
        match e.embed_documents(&texts(&["x"])) {
            Err(Error::Provider { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let e = Embedder::new(flaky(0, 5), EmbeddingCache::in_memory());
        assert!(matches!(
            e.embed_documents(&texts(&["x"])),
            Err(Error::DimensionMismatch { expected: 8, actual: 5 })
        ));
    }

    #[test]
    fn batches_run_bounded_parallel() {
        let e = Embedder::mock(2, 16).with_config(&ProviderConfig {
            batch_size: 2,
            max_in_flight: 2,
            dimension: 16,
            ..Default::default()
        });
        let many: Vec<String> = (0..9).map(|i| format!("text number {i}")).collect();
        let out = e.embed_documents(&many).unwrap();
        assert_eq!(out.len(), 9);
        assert_eq!(e.backend_calls(), 5);
        assert_eq!(out[4], e.embed_documents(&many[4..5]).unwrap()[0]);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(Embedder::mock(0, 8).embed_documents(&texts(&["ok", "  "])).is_err());
    }
}
