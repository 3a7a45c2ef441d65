//! Binary-relevance ranking metrics, macro-averaged over narratives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::RankedList;
use crate::error::{Error, Result};

fn require_relevant(relevant: &BTreeSet<String>, query_id: &str) -> Result<()> {
    if relevant.is_empty() {
        Err(Error::UndefinedMetric(query_id.to_string()))
    } else {
        Ok(())
    }
}

/// Mean of precision@r over the ranks of relevant hits, divided by all relevant documents.
pub fn average_precision(ranked: &RankedList, relevant: &BTreeSet<String>) -> Result<f64> {
    require_relevant(relevant, &ranked.query_id)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, id) in ranked.doc_ids().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

pub fn ndcg_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    require_relevant(relevant, &ranked.query_id)?;
    if k == 0 {
        return Err(Error::InvalidInput("nDCG cutoff must be at least 1".into()));
    }
    let dcg: f64 = ranked
        .doc_ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len().min(k))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    Ok(dcg / ideal)
}

/// Precision at rank R = |relevant|; missing ranks count as non-relevant.
pub fn r_precision(ranked: &RankedList, relevant: &BTreeSet<String>) -> Result<f64> {
    require_relevant(relevant, &ranked.query_id)?;
    let r = relevant.len();
    let hits = ranked.doc_ids().take(r).filter(|id| relevant.contains(*id)).count();
    Ok(hits as f64 / r as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarrativeScores {
    pub ap: f64,
    pub ndcg10: f64,
    pub ndcg100: f64,
    pub r_precision: f64,
    pub m_i: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub map: f64,
    pub ndcg10: f64,
    pub ndcg100: f64,
    pub avg_r_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub system: String,
    pub per_narrative: BTreeMap<String, NarrativeScores>,
    #[serde(rename = "macro")]
    pub macro_scores: MacroScores,
    /// Narratives left out of the macro means because they have no relevant documents.
    pub excluded: Vec<String>,
}

pub fn score_narrative(ranked: &RankedList, relevant: &BTreeSet<String>) -> Result<NarrativeScores> {
    Ok(NarrativeScores {
        ap: average_precision(ranked, relevant)?,
        ndcg10: ndcg_at_k(ranked, relevant, 10)?,
        ndcg100: ndcg_at_k(ranked, relevant, 100)?,
        r_precision: r_precision(ranked, relevant)?,
        m_i: relevant.len(),
    })
}

pub fn macro_average<'a>(scores: impl IntoIterator<Item = &'a NarrativeScores>) -> MacroScores {
    let mut out = MacroScores::default();
    let mut n = 0usize;
    for s in scores {
        out.map += s.ap;
        out.ndcg10 += s.ndcg10;
        out.ndcg100 += s.ndcg100;
        out.avg_r_precision += s.r_precision;
        n += 1;
    }
    if n > 0 {
        let n = n as f64;
        out.map /= n;
        out.ndcg10 /= n;
        out.ndcg100 /= n;
        out.avg_r_precision /= n;
    }
    out
}

pub fn evaluate(
    system: &str,
    lists: &[RankedList],
    judgments: &BTreeMap<String, BTreeSet<String>>,
) -> Result<EvalResult> {
    let mut per_narrative = BTreeMap::new();
    let mut excluded = Vec::new();
    for list in lists {
        let relevant = judgments.get(&list.query_id).ok_or_else(|| {
            Error::InvalidInput(format!("no judgments for narrative `{}`", list.query_id))
        })?;
        match score_narrative(list, relevant) {
            Ok(s) => {
                if per_narrative.insert(list.query_id.clone(), s).is_some() {
                    return Err(Error::DuplicateId(list.query_id.clone()));
                }
            }
            Err(Error::UndefinedMetric(id)) => {
                log::warn!("narrative `{id}` has no relevant documents; excluded from macro averages");
                excluded.push(id);
            }
            Err(e) => return Err(e),
        }
    }
    let macro_scores = macro_average(per_narrative.values());
    Ok(EvalResult {
        system: system.to_string(),
        per_narrative,
        macro_scores,
        excluded,
    })
}

impl EvalResult {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// One row per narrative followed by a `macro` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["narrative_id", "m_i", "ap", "ndcg10", "ndcg100", "r_precision"])?;
        for (id, s) in &self.per_narrative {
            w.write_record([
                id.clone(),
                s.m_i.to_string(),
                s.ap.to_string(),
                s.ndcg10.to_string(),
                s.ndcg100.to_string(),
                s.r_precision.to_string(),
            ])?;
        }
        let m = &self.macro_scores;
        w.write_record([
            "macro".to_string(),
            String::new(),
            m.map.to_string(),
            m.ndcg10.to_string(),
            m.ndcg100.to_string(),
            m.avg_r_precision.to_string(),
        ])?;
        let bytes = w.into_inner().map_err(|e| Error::io("flushing csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(
            "q",
            ids.iter().enumerate().map(|(i, id)| (id.to_string(), (n - i) as f64)),
            1000,
            0,
        )
    }

    fn rel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_cases() {
        let l = list(&["a", "x", "b"]);
        let r = rel(&["a", "b"]);
        assert_eq!(average_precision(&l, &r).unwrap(), (1.0 + 2.0 / 3.0) / 2.0);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert_eq!(ndcg_at_k(&l, &r, 3).unwrap(), expected);
        assert!((expected - 0.9197).abs() < 1e-4);
        assert_eq!(r_precision(&l, &r).unwrap(), 0.5);
    }

    #[test]
    fn extremes() {
        let r = rel(&["a", "b"]);
        assert_eq!(average_precision(&list(&["a", "b", "x"]), &r).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&list(&["a", "b"]), &r, 10).unwrap(), 1.0);
        assert_eq!(average_precision(&list(&["x", "y"]), &r).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&list(&["x", "y"]), &r, 10).unwrap(), 0.0);
        // R larger than the list: missing ranks are non-relevant.
        assert_eq!(r_precision(&list(&["a"]), &rel(&["a", "b", "c", "d"])).unwrap(), 0.25);
        assert!(matches!(average_precision(&list(&["a"]), &rel(&[])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn macro_is_unweighted() {
        let mut j = BTreeMap::new();
        j.insert("p".to_string(), rel(&["a"]));
        j.insert("q".to_string(), rel(&["b", "c", "d", "e"]));
        j.insert("z".to_string(), rel(&[]));
        let mut lp = list(&["a"]);
        lp.query_id = "p".into();
        let mut lq = list(&["x", "b"]);
        lq.query_id = "q".into();
        let mut lz = list(&["a"]);
        lz.query_id = "z".into();
        let e = evaluate("sys", &[lp, lq, lz], &j).unwrap();
        let ap_q = (1.0 / 2.0) / 4.0;
        assert_eq!(e.macro_scores.map, (1.0 + ap_q) / 2.0);
        assert_eq!(e.excluded, ["z"]);
        assert!(e.to_csv().unwrap().lines().last().unwrap().starts_with("macro,"));
    }

    proptest! {
        #[test]
        fn swapping_relevant_up_never_hurts(
            flags in proptest::collection::vec(any::<bool>(), 2..30),
            pos in 1usize..30,
        ) {
            let ids: Vec<String> = (0..flags.len()).map(|i| format!("d{i:02}")).collect();
            let relevant: BTreeSet<String> =
                ids.iter().zip(&flags).filter(|(_, &f)| f).map(|(i, _)| i.clone()).collect();
            prop_assume!(!relevant.is_empty());
            let p = pos % flags.len();
            prop_assume!(p > 0 && flags[p] && !flags[p - 1]);
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let mut swapped = refs.clone();
            swapped.swap(p - 1, p);
            let (a, b) = (list(&refs), list(&swapped));
            prop_assert!(average_precision(&b, &relevant)? >= average_precision(&a, &relevant)?);
            prop_assert!(ndcg_at_k(&b, &relevant, 10)? >= ndcg_at_k(&a, &relevant, 10)?);
        }

        #[test]
        fn appending_non_relevant_is_neutral(
            flags in proptest::collection::vec(any::<bool>(), 1..20),
            extra in 1usize..150,
        ) {
            let ids: Vec<String> = (0..flags.len()).map(|i| format!("d{i:03}")).collect();
            let relevant: BTreeSet<String> =
                ids.iter().zip(&flags).filter(|(_, &f)| f).map(|(i, _)| i.clone()).collect();
            prop_assume!(!relevant.is_empty());
            // Pad below rank max(k, R) first, then append the non-relevant tail.
            let mut padded_base = ids.clone();
            padded_base.extend((0..100).map(|i| format!("p{i:03}")));
            let mut padded_longer = padded_base.clone();
            padded_longer.extend((0..extra).map(|i| format!("n{i:03}")));
            let a = list(&padded_base.iter().map(String::as_str).collect::<Vec<_>>());
            let b = list(&padded_longer.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert_eq!(score_narrative(&a, &relevant)?, score_narrative(&b, &relevant)?);
        }

        #[test]
        fn perfect_system_scores_one(n_rel in 1usize..150) {
            let ids: Vec<String> = (0..n_rel).map(|i| format!("d{i:03}")).collect();
            let relevant: BTreeSet<String> = ids.iter().cloned().collect();
            let l = list(&ids.iter().map(String::as_str).collect::<Vec<_>>());
            let s = score_narrative(&l, &relevant)?;
            prop_assert_eq!(s.ap, 1.0);
            prop_assert!((s.ndcg10 - 1.0).abs() < 1e-15 && (s.ndcg100 - 1.0).abs() < 1e-15);
            prop_assert_eq!(s.r_precision, 1.0);
        }
    }
}
