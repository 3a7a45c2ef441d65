//! Personalized PageRank by power iteration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PprParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams {
            damping: 0.85,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `r = (1 - α) s + α (P r + dangling · s)` where `P` moves mass along edges in
/// proportion to weight and dangling nodes send their mass back to the seeds.
pub fn personalized_pagerank(
    adj: &[Vec<(usize, f64)>],
    seeds: &[usize],
    params: PprParams,
) -> Result<PprResult> {
    let n = adj.len();
    let seeds: BTreeSet<usize> = seeds.iter().copied().collect();
    if seeds.is_empty() {
        return Err(Error::InvalidInput("personalized pagerank needs at least one seed".into()));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidInput(format!("seed {bad} is not a node")));
    }
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(Error::InvalidInput(format!("damping {} outside (0, 1)", params.damping)));
    }
    let alpha = params.damping;
    let mut teleport = vec![0.0; n];
    for &s in &seeds {
        teleport[s] = 1.0 / seeds.len() as f64;
    }
    let strength: Vec<f64> = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();

    let mut r = teleport.clone();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        iterations += 1;
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut dangling = 0.0;
        for u in 0..n {
            if strength[u] > 0.0 {
                let share = r[u] / strength[u];
                for &(v, w) in &adj[u] {
                    next[v] += share * w;
                }
            } else {
                dangling += r[u];
            }
        }
        for v in 0..n {
            next[v] = (1.0 - alpha) * teleport[v] + alpha * (next[v] + dangling * teleport[v]);
        }
        // Renormalize against drift; the update preserves total mass exactly in theory.
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut r, &mut next);
        if delta < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("personalized pagerank stopped after {iterations} iterations without converging");
    }
    Ok(PprResult {
        scores: r,
        iterations,
        converged,
    })
}
