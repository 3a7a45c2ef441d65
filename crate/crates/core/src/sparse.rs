//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::dense::RankedList;
use crate::error::{Error, Result};

/// Lowercases and splits on every non-alphanumeric character. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_ids: Vec<String>,
    pub doc_lengths: Vec<u32>,
    pub avgdl: f64,
}

impl InvertedIndex {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Result<Self> {
        Self::build_from_texts(docs.into_iter().map(|d| (d.id.as_str(), d.text.as_str())))
    }

    pub fn build_from_texts<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        for (idx, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc: idx, tf: count });
            }
            doc_ids.push(id.to_string());
            doc_lengths.push(tokens.len() as u32);
        }
        if doc_ids.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let avgdl = doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_ids.len() as f64;
        Ok(InvertedIndex {
            postings,
            doc_ids,
            doc_lengths,
            avgdl,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always non-negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` documents with positive score; ties by ascending doc id.
    pub fn search(&self, query_id: &str, query: &str, k: usize, params: Bm25Params) -> RankedList {
        let mut scores: HashMap<usize, f64> = HashMap::new();
        // Repeated query terms count once per occurrence, as in the summed formula.
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for p in list {
                let tf = f64::from(p.tf);
                let len = f64::from(self.doc_lengths[p.doc]);
                let norm = params.k1 * (1.0 - params.b + params.b * len / self.avgdl);
                *scores.entry(p.doc).or_default() += idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }
        let entries = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, s)| (self.doc_ids[doc].clone(), s));
        RankedList::from_scores(query_id, entries, k, 0)
    }
}

pub fn bm25_search(
    index: &InvertedIndex,
    query_id: &str,
    query: &str,
    k: usize,
    params: Bm25Params,
) -> RankedList {
    index.search(query_id, query, k, params)
}
