//! Labeled narrative corpora, taxonomy-derived queries and relevance judgments.
//!
//! Documents are read from JSONL (canonical) or CSV with the fixed header
//! `id,text,labels,split`, where CSV labels are `|`-separated. The taxonomy
//! file is a JSON array of `{"id", "narrative", "subnarrative"}` objects.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidInput(format!("unknown dataset format `{other}`"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
    pub split: Split,
    pub word_count: usize,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
        split: Split,
    ) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            word_count: word_count(&text),
            text,
            labels: labels.into_iter().map(Into::into).collect(),
            split,
        }
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }
}

/// Whitespace-token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default)]
    labels: Vec<String>,
    split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeQuery {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub id: String,
    pub narrative: String,
    pub subnarrative: String,
}

/// Concatenates the two hierarchy levels of every taxonomy entry into a query.
pub fn build_queries(taxonomy: &[TaxonomyEntry]) -> Result<Vec<NarrativeQuery>> {
    let mut seen = HashSet::new();
    taxonomy
        .iter()
        .map(|entry| {
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::DuplicateId(entry.id.clone()));
            }
            let level1 = entry.narrative.trim();
            let level2 = entry.subnarrative.trim();
            if level1.is_empty() || level2.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "taxonomy entry `{}` has an empty label",
                    entry.id
                )));
            }
            Ok(NarrativeQuery {
                id: entry.id.clone(),
                description: format!("{level1}. {level2}"),
            })
        })
        .collect()
}

pub fn load_taxonomy(path: &Path) -> Result<Vec<TaxonomyEntry>> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading taxonomy {}", path.display()), e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub documents: Vec<Document>,
    pub queries: Vec<NarrativeQuery>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        documents: Vec<Document>,
        queries: Vec<NarrativeQuery>,
    ) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::InvalidInput("dataset has no narrative queries".into()));
        }
        let mut ids = HashSet::new();
        for q in &queries {
            if q.description.trim().is_empty() {
                return Err(Error::InvalidInput(format!("query `{}` has no description", q.id)));
            }
            if !ids.insert(q.id.as_str()) {
                return Err(Error::DuplicateId(q.id.clone()));
            }
        }
        let mut doc_ids = HashSet::new();
        for d in &documents {
            if !doc_ids.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let unknown: BTreeSet<&str> = documents
            .iter()
            .filter(|d| d.split == Split::Test)
            .flat_map(|d| d.labels.iter().map(String::as_str))
            .filter(|l| !ids.contains(l))
            .collect();
        if !unknown.is_empty() {
            warn!("test labels without a matching query: {unknown:?}");
        }
        Ok(Dataset {
            name: name.into(),
            documents,
            queries,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(move |d| d.split == split)
    }

    pub fn test_documents(&self) -> Vec<&Document> {
        self.split(Split::Test).collect()
    }

    pub fn train_documents(&self) -> Vec<&Document> {
        self.split(Split::Train).collect()
    }

    pub fn query(&self, id: &str) -> Option<&NarrativeQuery> {
        self.queries.iter().find(|q| q.id == id)
    }

    /// Queries with at least one relevant test document, in taxonomy order.
    pub fn attested_queries(&self) -> Vec<&NarrativeQuery> {
        let attested: HashSet<&str> = self
            .split(Split::Test)
            .flat_map(|d| d.labels.iter().map(String::as_str))
            .collect();
        self.queries
            .iter()
            .filter(|q| attested.contains(q.id.as_str()))
            .collect()
    }

    /// Test-split document ids carrying `narrative_id`.
    pub fn judgments(&self, narrative_id: &str) -> Result<BTreeSet<String>> {
        if self.query(narrative_id).is_none() {
            return Err(Error::UnknownNarrative(narrative_id.to_string()));
        }
        Ok(self
            .split(Split::Test)
            .filter(|d| d.labels.contains(narrative_id))
            .map(|d| d.id.clone())
            .collect())
    }

    pub fn all_judgments(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.queries
            .iter()
            .map(|q| {
                let rel = self
                    .split(Split::Test)
                    .filter(|d| d.labels.contains(&q.id))
                    .map(|d| d.id.clone())
                    .collect();
                (q.id.clone(), rel)
            })
            .collect()
    }

    /// Copy of the dataset whose train-split documents carry no labels.
    pub fn without_train_labels(&self) -> Dataset {
        let documents = self
            .documents
            .iter()
            .map(|d| {
                let mut d = d.clone();
                if d.split == Split::Train {
                    d.labels.clear();
                }
                d
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            documents,
            queries: self.queries.clone(),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for d in &self.documents {
            let record = DocumentRecord {
                id: d.id.clone(),
                text: d.text.clone(),
                labels: d.labels.iter().cloned().collect(),
                split: match d.split {
                    Split::Train => "train".into(),
                    Split::Test => "test".into(),
                },
            };
            serde_json::to_writer(&mut out, &record)?;
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

pub fn load_documents(path: &Path, format: Format) -> Result<Vec<Document>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let records = match format {
        Format::Jsonl => read_jsonl(path, BufReader::new(file))?,
        Format::Csv => read_csv(path, file)?,
    };
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(records.len());
    for (line, rec) in records {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        let split: Split = rec.split.parse().map_err(|e: Error| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        docs.push(Document::new(rec.id, rec.text, rec.labels, split));
    }
    Ok(docs)
}

/// Loads documents and attaches the given queries; the dataset is named after the file stem.
pub fn load_dataset(path: &Path, format: Format, queries: Vec<NarrativeQuery>) -> Result<Dataset> {
    let documents = load_documents(path, format)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    Dataset::new(name, documents, queries)
}

fn read_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<(usize, DocumentRecord)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn read_csv(path: &Path, file: fs::File) -> Result<Vec<(usize, DocumentRecord)>> {
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let expected = ["id", "text", "labels", "split"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line_no = idx + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let labels = row[2]
            .split('|')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        out.push((
            line_no,
            DocumentRecord {
                id: row[0].to_string(),
                text: row[1].to_string(),
                labels,
                split: row[3].to_string(),
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub narratives: usize,
    pub mean_texts_per_narrative: f64,
    pub std_texts_per_narrative: f64,
    pub mean_words_per_narrative: f64,
    pub std_words_per_narrative: f64,
    pub mean_words_per_text: f64,
    pub std_words_per_text: f64,
    pub total_texts: usize,
    pub disinfo_fraction: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Test-split statistics. Standard deviations are population deviations.
pub fn dataset_stats(dataset: &Dataset) -> StatsReport {
    let test = dataset.test_documents();
    let judgments = dataset.all_judgments();
    let attested: Vec<&NarrativeQuery> = dataset.attested_queries();
    let texts_per: Vec<f64> = attested
        .iter()
        .map(|q| judgments[&q.id].len() as f64)
        .collect();
    let words_per_narrative: Vec<f64> = attested
        .iter()
        .map(|q| word_count(&q.description) as f64)
        .collect();
    let words_per_text: Vec<f64> = test.iter().map(|d| d.word_count as f64).collect();
    let (mt, st) = mean_std(&texts_per);
    let (mwn, swn) = mean_std(&words_per_narrative);
    let (mw, sw) = mean_std(&words_per_text);
    let labeled = test.iter().filter(|d| d.is_labeled()).count();
    StatsReport {
        narratives: attested.len(),
        mean_texts_per_narrative: mt,
        std_texts_per_narrative: st,
        mean_words_per_narrative: mwn,
        std_words_per_narrative: swn,
        mean_words_per_text: mw,
        std_words_per_text: sw,
        total_texts: test.len(),
        disinfo_fraction: if test.is_empty() {
            0.0
        } else {
            labeled as f64 / test.len() as f64
        },
    }
}
