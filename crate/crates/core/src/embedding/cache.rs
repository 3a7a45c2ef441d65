//! Content-addressed on-disk vector store.
//!
//! One file per key under the cache directory. Payload layout: a
//! little-endian `u32` dimension followed by that many little-endian `f32`s.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub fn cache_key(model: &str, instruction: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0x1f]);
    h.update(instruction.as_bytes());
    h.update([0x1f]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

pub fn encode_vector(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * values.len());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_vector(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() < 4 {
        return Err(Error::InvalidInput("vector payload shorter than header".into()));
    }
    let dim = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let body = &bytes[4..];
    if body.len() != dim * 4 {
        return Err(Error::InvalidInput(format!(
            "vector payload has {} bytes, header says dimension {dim}",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes via a temporary file and rename so readers never see partial payloads.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

#[derive(Debug)]
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache {
            dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("creating cache dir {}", dir.display()), e))?;
        Ok(EmbeddingCache {
            dir: Some(dir),
            memory: Mutex::new(HashMap::new()),
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.bin")))
    }

    pub fn get(&self, key: &str) -> Result<Option<EmbeddingVector>> {
        if let Some(v) = self.memory.lock().unwrap().get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(path) = self.path_for(key) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => {
                let v = EmbeddingVector::from_f32_unit(decode_vector(&bytes)?);
                self.memory.lock().unwrap().insert(key.to_string(), v.clone());
                Ok(Some(v))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
        }
    }

    pub fn put(&self, key: &str, vector: &EmbeddingVector) -> Result<()> {
        if let Some(path) = self.path_for(key) {
            write_atomic(&path, &encode_vector(vector.values()))?;
        }
        self.memory
            .lock()
            .unwrap()
            .insert(key.to_string(), vector.clone());
        Ok(())
    }
}
