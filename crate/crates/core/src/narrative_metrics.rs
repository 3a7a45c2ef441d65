//! Narrative distinctness and variance over a dedicated metric embedder.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::embedding::{cosine_distance_slices, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::ir_metrics::EvalResult;

#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeEmbeddingSet {
    pub narrative_id: String,
    pub embeddings: Vec<EmbeddingVector>,
    /// Plain component-wise mean; not re-normalized.
    pub centroid: Vec<f64>,
    pub m_i: usize,
}

impl NarrativeEmbeddingSet {
    pub fn new(narrative_id: impl Into<String>, embeddings: Vec<EmbeddingVector>) -> Result<Self> {
        let narrative_id = narrative_id.into();
        let first = embeddings
            .first()
            .ok_or_else(|| Error::InvalidInput(format!("narrative `{narrative_id}` has no texts")))?;
        let dim = first.dimension();
        let mut centroid = vec![0.0; dim];
        for e in &embeddings {
            if e.dimension() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dimension(),
                });
            }
            for (c, x) in centroid.iter_mut().zip(e.values()) {
                *c += x;
            }
        }
        let m = embeddings.len();
        for c in &mut centroid {
            *c /= m as f64;
        }
        Ok(NarrativeEmbeddingSet {
            narrative_id,
            embeddings,
            centroid,
            m_i: m,
        })
    }
}

/// Embeds every labeled test text once and groups the vectors per attested
/// narrative; multi-label texts join each of their narratives.
pub fn build_sets(dataset: &Dataset, embedder: &Embedder) -> Result<Vec<NarrativeEmbeddingSet>> {
    let docs: Vec<_> = dataset.test_documents().into_iter().filter(|d| d.is_labeled()).collect();
    if docs.is_empty() {
        return Err(Error::InvalidInput("no labeled test documents".into()));
    }
    let texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
    let vectors = embedder.embed_documents(&texts)?;
    dataset
        .attested_queries()
        .into_iter()
        .map(|q| {
            let members: Vec<EmbeddingVector> = docs
                .iter()
                .zip(&vectors)
                .filter(|(d, _)| d.labels.contains(&q.id))
                .map(|(_, v)| v.clone())
                .collect();
            NarrativeEmbeddingSet::new(q.id.clone(), members)
        })
        .collect()
}

/// `D_i = sqrt(mean_j d_ij * min_j d_ij)` over cosine distances between centroids.
pub fn distinctness(sets: &[NarrativeEmbeddingSet]) -> Result<BTreeMap<String, f64>> {
    if sets.len() < 2 {
        return Err(Error::InvalidInput("distinctness needs at least two narratives".into()));
    }
    let k = sets.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let dist = cosine_distance_slices(&sets[i].centroid, &sets[j].centroid)?;
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..k {
        let others = (0..k).filter(|&j| j != i).map(|j| d[i][j]);
        let mean = others.clone().sum::<f64>() / (k - 1) as f64;
        let min = others.fold(f64::INFINITY, f64::min);
        if out.insert(sets[i].narrative_id.clone(), (mean * min).sqrt()).is_some() {
            return Err(Error::DuplicateId(sets[i].narrative_id.clone()));
        }
    }
    Ok(out)
}

/// `V_i = (1/m_i) Σ_j ‖t_ij − c_i‖²`.
pub fn variance(set: &NarrativeEmbeddingSet) -> f64 {
    set.embeddings
        .iter()
        .map(|e| {
            e.values()
                .iter()
                .zip(&set.centroid)
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
        })
        .sum::<f64>()
        / set.m_i as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub m_i: usize,
    pub d_i: f64,
    pub v_i: f64,
    /// Average precision per evaluated system.
    pub ap: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric_model: String,
    /// Whether V_i was computed on unit-normalized embeddings.
    pub normalized: bool,
    pub rows: BTreeMap<String, MetricRow>,
}

impl MetricTable {
    pub fn from_sets(
        sets: &[NarrativeEmbeddingSet],
        metric_model: &str,
        evals: &[EvalResult],
    ) -> Result<Self> {
        let d = distinctness(sets)?;
        let normalized = sets
            .iter()
            .all(|s| s.embeddings.iter().all(EmbeddingVector::is_unit_normalized));
        let mut rows = BTreeMap::new();
        for s in sets {
            let mut ap = BTreeMap::new();
            for e in evals {
                if let Some(scores) = e.per_narrative.get(&s.narrative_id) {
                    ap.insert(e.system.clone(), scores.ap);
                }
            }
            rows.insert(
                s.narrative_id.clone(),
                MetricRow {
                    m_i: s.m_i,
                    d_i: d[&s.narrative_id],
                    v_i: variance(s),
                    ap,
                },
            );
        }
        Ok(MetricTable {
            metric_model: metric_model.to_string(),
            normalized,
            rows,
        })
    }

    pub fn systems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.values().flat_map(|r| r.ap.keys().cloned()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// `narrative_id,m_i,D_i,V_i,ap_<system>...`; missing AP cells are empty.
    pub fn to_csv(&self) -> Result<String> {
        let systems = self.systems();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["narrative_id".to_string(), "m_i".into(), "D_i".into(), "V_i".into()];
        header.extend(systems.iter().map(|s| format!("ap_{s}")));
        w.write_record(&header)?;
        for (id, r) in &self.rows {
            let mut rec = vec![id.clone(), r.m_i.to_string(), r.d_i.to_string(), r.v_i.to_string()];
            rec.extend(systems.iter().map(|s| r.ap.get(s).map(f64::to_string).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("flushing csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads the CSV form. Metadata not carried by CSV is set from the arguments.
    pub fn from_csv(text: &str, metric_model: &str, normalized: bool) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let expect = ["narrative_id", "m_i", "D_i", "V_i"];
        if header.len() < 4 || header.iter().take(4).ne(expect) {
            return Err(Error::InvalidInput(format!(
                "metric table header must start with {}",
                expect.join(",")
            )));
        }
        let mut systems = Vec::new();
        for h in header.iter().skip(4) {
            let s = h
                .strip_prefix("ap_")
                .ok_or_else(|| Error::InvalidInput(format!("unexpected column `{h}`")))?;
            systems.push(s.to_string());
        }
        let num = |s: &str, line: usize| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line {line}: `{s}` is not a number")))
        };
        let mut rows = BTreeMap::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let id = rec[0].to_string();
            let m_i = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line {line}: bad m_i `{}`", &rec[1])))?;
            let mut ap = BTreeMap::new();
            for (s, cell) in systems.iter().zip(rec.iter().skip(4)) {
                if !cell.trim().is_empty() {
                    ap.insert(s.clone(), num(cell, line)?);
                }
            }
            let row = MetricRow {
                m_i,
                d_i: num(&rec[2], line)?,
                v_i: num(&rec[3], line)?,
                ap,
            };
            if rows.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(MetricTable {
            metric_model: metric_model.to_string(),
            normalized,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Self::from_csv(&text, "unknown", true)
        }
    }
}
