//! Content-addressed artifact directory.
//!
//! Layout: `<root>/<kind>/<name>-<digest16>/...` for artifacts and
//! `<root>/refs/<dataset>/<ref>` text files naming the latest artifact of
//! each kind, so later commands can find what earlier ones wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub struct Workspace {
    root: PathBuf,
    lock: Option<PathBuf>,
}

impl Workspace {
    /// Opens (creating if needed) the workspace and takes the advisory lock.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(format!("creating workspace {}", root.display()), e))?;
        let lock_path = root.join(".lock");
        let lock = match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => {
                fs::write(&lock_path, std::process::id().to_string()).ok();
                Some(lock_path)
            }
            Err(_) => {
                warn!("workspace {} is locked by another process (or a stale .lock); continuing", root.display());
                None
            }
        };
        Ok(Workspace { root, lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache").join("embeddings")
    }

    pub fn artifact_dir(&self, kind: &str, name: &str, digest: &str) -> Result<PathBuf> {
        let dir = self.root.join(kind).join(format!("{name}-{}", &digest[..16.min(digest.len())]));
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(dir)
    }

    fn ref_path(&self, dataset: &str, name: &str) -> PathBuf {
        self.root.join("refs").join(dataset).join(name)
    }

    /// Points `dataset/name` at `dir`, stored relative to the workspace root.
    pub fn set_ref(&self, dataset: &str, name: &str, dir: &Path) -> Result<()> {
        let rel = dir.strip_prefix(&self.root).unwrap_or(dir);
        write_file(&self.ref_path(dataset, name), format!("{}\n", rel.display()).as_bytes())
    }

    pub fn get_ref(&self, dataset: &str, name: &str) -> Result<Option<PathBuf>> {
        let p = self.ref_path(dataset, name);
        match fs::read_to_string(&p) {
            Ok(s) => Ok(Some(self.root.join(s.trim()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("reading {}", p.display()), e)),
        }
    }

    /// Like `get_ref`, but a missing ref is an input error naming `hint`.
    pub fn require_ref(&self, dataset: &str, name: &str, hint: &str) -> Result<PathBuf> {
        self.get_ref(dataset, name)?
            .ok_or_else(|| Error::InvalidInput(format!("no `{name}` artifact for dataset `{dataset}`; run `{hint}` first")))
    }

    /// All refs of a dataset whose name starts with `prefix`, keyed by the rest of the name.
    pub fn refs_with_prefix(&self, dataset: &str, prefix: &str) -> Result<BTreeMap<String, PathBuf>> {
        let dir = self.root.join("refs").join(dataset);
        let mut out = BTreeMap::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(Error::io(format!("listing {}", dir.display()), e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(rest) = name.strip_prefix(prefix) {
                if let Some(p) = self.get_ref(dataset, &name)? {
                    out.insert(rest.to_string(), p);
                }
            }
        }
        Ok(out)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if let Some(p) = &self.lock {
            fs::remove_file(p).ok();
        }
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming onto {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Per-command provenance. Timestamps and timings live only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_digest: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seeds: Vec<u64>,
    pub started_at: f64,
    pub finished_at: f64,
    /// Wall-clock seconds per narrative, by stage.
    pub seconds_per_narrative: BTreeMap<String, f64>,
    pub embedding_calls: usize,
    pub llm_calls: usize,
    /// Artifact dirs this command read, relative to the workspace root.
    pub inputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: &str, dataset: &str) -> Self {
        let now = unix_now();
        RunManifest {
            command: command.into(),
            status: Status::Ok,
            error: None,
            config_digest: config_digest.into(),
            dataset: dataset.into(),
            variant: None,
            seeds: Vec::new(),
            started_at: now,
            finished_at: now,
            seconds_per_narrative: BTreeMap::new(),
            embedding_calls: 0,
            llm_calls: 0,
            inputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_at = unix_now().max(self.started_at);
        for v in self.seconds_per_narrative.values_mut() {
            *v = v.max(0.0);
        }
        write_json(&dir.join("manifest.json"), &self)
    }
}
