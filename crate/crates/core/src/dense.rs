//! Exact dense retrieval over unit-normalized embeddings.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::embedding::{
    decode_vector, dot, encode_vector, write_atomic, Embedder, EmbeddingVector,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
    pub run_seed: u64,
}

pub(crate) fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Sorts by descending score, ascending doc id on ties, and keeps the top `k`.
    pub fn from_scores(
        query_id: &str,
        scores: impl IntoIterator<Item = (String, f64)>,
        k: usize,
        run_seed: u64,
    ) -> Self {
        let mut entries: Vec<(String, f64)> = scores.into_iter().collect();
        entries.sort_by(by_score_then_id);
        entries.truncate(k);
        RankedList {
            query_id: query_id.to_string(),
            entries,
            run_seed,
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for w in self.entries.windows(2) {
            if by_score_then_id(&w[0], &w[1]) == Ordering::Greater {
                return Err(Error::Invariant(format!(
                    "ranked list `{}` out of order at `{}`",
                    self.query_id, w[1].0
                )));
            }
        }
        for (id, _) in &self.entries {
            if !seen.insert(id) {
                return Err(Error::Invariant(format!(
                    "ranked list `{}` repeats `{id}`",
                    self.query_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    rows: Vec<EmbeddingVector>,
    ids: Vec<String>,
    model_tag: String,
}

#[derive(Serialize, Deserialize)]
struct IdManifest {
    model_tag: String,
    dimension: usize,
    ids: Vec<String>,
}

impl DenseIndex {
    pub fn new(ids: Vec<String>, rows: Vec<EmbeddingVector>, model_tag: impl Into<String>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} vectors",
                ids.len(),
                rows.len()
            )));
        }
        if ids.is_empty() {
            return Err(Error::InvalidInput("dense index needs at least one row".into()));
        }
        let dim = rows[0].dimension();
        for r in &rows {
            if r.dimension() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.dimension(),
                });
            }
            if (r.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Invariant("dense index rows must be unit-normalized".into()));
            }
        }
        Ok(DenseIndex {
            rows,
            ids,
            model_tag: model_tag.into(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[EmbeddingVector] {
        &self.rows
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn dimension(&self) -> usize {
        self.rows[0].dimension()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends rows produced by the same model.
    pub fn extend(&mut self, other: DenseIndex) -> Result<()> {
        if other.model_tag != self.model_tag {
            return Err(Error::ModelTagMismatch {
                index: self.model_tag.clone(),
                other: other.model_tag,
            });
        }
        if other.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: other.dimension(),
            });
        }
        self.ids.extend(other.ids);
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn row(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids.iter().position(|i| i == id).map(|p| &self.rows[p])
    }

    /// Exhaustive dot-product scan.
    pub fn top_k(&self, query_id: &str, query: &EmbeddingVector, k: usize, run_seed: u64) -> Result<RankedList> {
        if query.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: query.dimension(),
            });
        }
        let scores = self
            .ids
            .iter()
            .zip(&self.rows)
            .map(|(id, row)| (id.clone(), dot(row.values(), query.values())));
        Ok(RankedList::from_scores(query_id, scores, k, run_seed))
    }

    /// Writes `<name>.bin` (concatenated vector payloads) and `<name>.ids.json`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let mut payload = Vec::new();
        for r in &self.rows {
            payload.extend(encode_vector(r.values()));
        }
        write_atomic(&dir.join(format!("{name}.bin")), &payload)?;
        let manifest = IdManifest {
            model_tag: self.model_tag.clone(),
            dimension: self.dimension(),
            ids: self.ids.clone(),
        };
        write_atomic(
            &dir.join(format!("{name}.ids.json")),
            &serde_json::to_vec_pretty(&manifest)?,
        )
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let manifest_path = dir.join(format!("{name}.ids.json"));
        let manifest: IdManifest = serde_json::from_slice(
            &fs::read(&manifest_path)
                .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?,
        )?;
        let bin_path = dir.join(format!("{name}.bin"));
        let payload = fs::read(&bin_path)
            .map_err(|e| Error::io(format!("reading {}", bin_path.display()), e))?;
        let stride = 4 + 4 * manifest.dimension;
        if payload.len() != stride * manifest.ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} is {} bytes, expected {}",
                bin_path.display(),
                payload.len(),
                stride * manifest.ids.len()
            )));
        }
        let rows = payload
            .chunks_exact(stride)
            .map(|chunk| decode_vector(chunk).map(EmbeddingVector::from_f32_unit))
            .collect::<Result<Vec<_>>>()?;
        DenseIndex::new(manifest.ids, rows, manifest.model_tag)
    }
}

pub fn build_dense_index<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    embedder: &Embedder,
) -> Result<DenseIndex> {
    let (ids, texts): (Vec<String>, Vec<String>) =
        docs.into_iter().map(|d| (d.id.clone(), d.text.clone())).unzip();
    if ids.is_empty() {
        return Err(Error::InvalidInput("no documents to index".into()));
    }
    let rows = embedder.embed_documents(&texts)?;
    DenseIndex::new(ids, rows, embedder.model())
}

/// Mean of `vectors` (plus `query` when given, with weight one), re-normalized.
pub fn aggregate(vectors: &[EmbeddingVector], query: Option<&EmbeddingVector>) -> Result<EmbeddingVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to aggregate".into()))?;
    let dim = first.dimension();
    let mut sum = vec![0.0; dim];
    for v in vectors.iter().chain(query) {
        if v.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dimension(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += x;
        }
    }
    let count = (vectors.len() + usize::from(query.is_some())) as f64;
    for s in &mut sum {
        *s /= count;
    }
    // Cancellation leaves rounding residue, so test the norm relative to the inputs.
    let scale = vectors.iter().chain(query).map(EmbeddingVector::norm).fold(0.0, f64::max);
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateAggregate);
    }
    EmbeddingVector::normalized(sum)
}
