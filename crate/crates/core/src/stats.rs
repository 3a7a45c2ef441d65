//! Rank correlation, multiple-testing correction, residualized (partial)
//! correlation, permutation tests, leave-one-out stability and median splits.

use std::fmt::Write as _;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::embedding::splitmix64;
use crate::error::{Error, Result};
use crate::narrative_metrics::MetricTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spearman,
    PartialSpearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_raw: f64,
    pub p_fdr: Option<f64>,
    pub n: usize,
    pub method: Method,
    pub degenerate: bool,
    /// Set when a partial correlation fell back to plain Spearman (constant control).
    #[serde(default)]
    pub control_constant: bool,
}

impl CorrelationResult {
    fn degenerate(n: usize, method: Method) -> Self {
        CorrelationResult {
            rho: 0.0,
            p_raw: 1.0,
            p_fdr: None,
            n,
            method,
            degenerate: true,
            control_constant: false,
        }
    }
}

/// 1-based ranks, ties receive the average of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation; `None` when either input has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p of the t-approximation with `n - 2` degrees of freedom.
fn t_approx_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::InvalidInput(format!(
            "need at least {min} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y, 3)?;
    Ok(spearman_unchecked(x, y, Method::Spearman))
}

fn spearman_unchecked(x: &[f64], y: &[f64], method: Method) -> CorrelationResult {
    let n = x.len();
    match pearson(&average_ranks(x), &average_ranks(y)) {
        None => CorrelationResult::degenerate(n, method),
        Some(rho) => CorrelationResult {
            rho,
            p_raw: t_approx_p(rho, n),
            p_fdr: None,
            n,
            method,
            degenerate: false,
            control_constant: false,
        },
    }
}

/// Benjamini–Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // The max guards against rounding pushing p * m / m below p.
        running = running.min((p[i] * m as f64 / (rank + 1) as f64).max(p[i]));
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialResult {
    pub result: CorrelationResult,
    pub resid_x: Vec<f64>,
    pub resid_y: Vec<f64>,
}

fn std_pop(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Residuals of the OLS fit `y ~ 1 + c`; `None` when `c` is constant.
pub fn ols_residuals(y: &[f64], c: &[f64]) -> Option<Vec<f64>> {
    let (my, mc) = (mean(y), mean(c));
    let scc: f64 = c.iter().map(|v| (v - mc) * (v - mc)).sum();
    if scc == 0.0 {
        return None;
    }
    let scy: f64 = c.iter().zip(y).map(|(a, b)| (a - mc) * (b - my)).sum();
    let slope = scy / scc;
    let intercept = my - slope * mc;
    Some(y.iter().zip(c).map(|(v, k)| v - (intercept + slope * k)).collect())
}

/// Residuals this small relative to the input spread are treated as zero.
const RESIDUAL_EPS: f64 = 1e-10;

/// Spearman correlation of the residuals of `x` and `y` after linear
/// regression on `control`.
pub fn partial_spearman(x: &[f64], y: &[f64], control: &[f64]) -> Result<PartialResult> {
    check_pair(x, y, 4)?;
    check_pair(x, control, 4)?;
    let n = x.len();
    let (rx, ry, control_constant) = match (ols_residuals(x, control), ols_residuals(y, control)) {
        (Some(rx), Some(ry)) => (rx, ry, false),
        _ => {
            log::warn!("control variable is constant; partial correlation falls back to plain Spearman");
            let (mx, my) = (mean(x), mean(y));
            (
                x.iter().map(|v| v - mx).collect(),
                y.iter().map(|v| v - my).collect(),
                true,
            )
        }
    };
    let method = if control_constant {
        Method::Spearman
    } else {
        Method::PartialSpearman
    };
    let degenerate = std_pop(&rx) <= RESIDUAL_EPS * (1.0 + std_pop(x))
        || std_pop(&ry) <= RESIDUAL_EPS * (1.0 + std_pop(y));
    let mut result = if degenerate {
        CorrelationResult::degenerate(n, method)
    } else {
        spearman_unchecked(&rx, &ry, method)
    };
    result.control_constant = control_constant;
    Ok(PartialResult {
        result,
        resid_x: rx,
        resid_y: ry,
    })
}

fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut state = seed ^ iteration.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(splitmix64(&mut state))
}

/// Two-sided permutation p-value for the Spearman correlation of two
/// residual vectors: `(1 + #{|ρ_perm| ≥ |ρ_obs|}) / (1 + iterations)`.
/// Each iteration draws from its own seeded stream, so the result does not
/// depend on how iterations are spread across threads.
pub fn permutation_test(resid_x: &[f64], resid_y: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    check_pair(resid_x, resid_y, 3)?;
    if iterations == 0 {
        return Err(Error::InvalidInput("permutation test needs at least one iteration".into()));
    }
    let rx = average_ranks(resid_x);
    let ry = average_ranks(resid_y);
    let observed = pearson(&rx, &ry)
        .ok_or_else(|| Error::Degenerate("constant residuals in permutation test".into()))?
        .abs();
    // Ties within rounding of the observed value count as extreme.
    let threshold = observed - 1e-12;

    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(8).min(iterations);
    let per = iterations.div_ceil(workers);
    let count: usize = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (rx, ry) = (&rx, &ry);
                scope.spawn(move || {
                    let mut hits = 0usize;
                    let mut perm = ry.clone();
                    for it in (w * per)..((w + 1) * per).min(iterations) {
                        perm.copy_from_slice(ry);
                        perm.shuffle(&mut iteration_rng(seed, it as u64));
                        if pearson(rx, &perm).map_or(0.0, f64::abs) >= threshold {
                            hits += 1;
                        }
                    }
                    hits
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("permutation worker panicked")).sum()
    });
    Ok((1 + count) as f64 / (1 + iterations) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub folds: Vec<CorrelationResult>,
    pub min_rho: f64,
    pub max_rho: f64,
    /// Every fold is non-degenerate with raw p below alpha.
    pub all_significant: bool,
    pub alpha: f64,
}

/// Partial Spearman with each observation left out in turn.
pub fn leave_one_out(x: &[f64], y: &[f64], control: &[f64], alpha: f64) -> Result<LooResult> {
    check_pair(x, y, 5)?;
    check_pair(x, control, 5)?;
    let n = x.len();
    let mut folds = Vec::with_capacity(n);
    for drop in 0..n {
        let keep = |v: &[f64]| -> Vec<f64> {
            v.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, &x)| x).collect()
        };
        let r = partial_spearman(&keep(x), &keep(y), &keep(control))?.result;
        if r.degenerate {
            log::warn!("leave-one-out fold {drop} is degenerate");
        }
        folds.push(r);
    }
    let live: Vec<f64> = folds.iter().filter(|f| !f.degenerate).map(|f| f.rho).collect();
    Ok(LooResult {
        min_rho: live.iter().copied().fold(f64::INFINITY, f64::min),
        max_rho: live.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        all_significant: folds.iter().all(|f| !f.degenerate && f.p_raw < alpha),
        alpha,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSplit {
    pub median: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub low_mean: f64,
    pub high_mean: f64,
    /// `(low_mean - high_mean) / low_mean * 100`.
    pub drop_pct: f64,
}

/// Splits at the median of `values` (ties go low) and compares the mean of `scores` per group.
pub fn median_split(values: &[f64], scores: &[f64]) -> Result<MedianSplit> {
    check_pair(values, scores, 2)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let (low, high): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
        values.iter().copied().zip(scores.iter().copied()).partition(|(v, _)| *v <= median);
    if low.is_empty() || high.is_empty() {
        return Err(Error::Degenerate("median split leaves an empty group".into()));
    }
    let avg = |g: &[(f64, f64)]| g.iter().map(|p| p.1).sum::<f64>() / g.len() as f64;
    let (low_mean, high_mean) = (avg(&low), avg(&high));
    if low_mean == 0.0 {
        return Err(Error::Degenerate("low group mean is zero; relative drop undefined".into()));
    }
    Ok(MedianSplit {
        median,
        n_low: low.len(),
        n_high: high.len(),
        low_mean,
        high_mean,
        drop_pct: (low_mean - high_mean) / low_mean * 100.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub iterations: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            iterations: 10_000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisCell {
    pub system: String,
    /// `D_i` or `V_i`.
    pub metric: String,
    pub original: CorrelationResult,
    pub partial: CorrelationResult,
    pub p_perm: Option<f64>,
    pub loo: Option<LooResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrFamily {
    pub name: String,
    /// `system/metric/block` labels of the tests in the family.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: AnalysisParams,
    pub narratives: usize,
    pub cells: Vec<AnalysisCell>,
    pub median_splits: Vec<(String, MedianSplit)>,
    pub families: Vec<FdrFamily>,
}

pub const METRICS: [&str; 2] = ["D_i", "V_i"];

/// Correlates every system's per-narrative AP with D_i and V_i, plain and
/// controlled for m_i. The plain block and the partial block are separate
/// FDR families.
pub fn analyze(table: &MetricTable, params: AnalysisParams) -> Result<AnalysisReport> {
    let systems = table.systems();
    if systems.is_empty() {
        return Err(Error::InvalidInput("metric table has no AP columns".into()));
    }
    let mut cells = Vec::new();
    let mut median_splits = Vec::new();
    let mut narratives = 0;
    for (si, system) in systems.iter().enumerate() {
        let rows: Vec<_> = table.rows.values().filter(|r| r.ap.contains_key(system)).collect();
        narratives = narratives.max(rows.len());
        let ap: Vec<f64> = rows.iter().map(|r| r.ap[system]).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.m_i as f64).collect();
        for (mi, metric) in METRICS.iter().enumerate() {
            let values: Vec<f64> = rows
                .iter()
                .map(|r| if *metric == "D_i" { r.d_i } else { r.v_i })
                .collect();
            let original = spearman(&values, &ap)?;
            let partial = partial_spearman(&values, &ap, &m)?;
            let p_perm = if partial.result.degenerate {
                None
            } else {
                let seed = params.seed ^ ((si as u64) << 32 | mi as u64);
                Some(permutation_test(&partial.resid_x, &partial.resid_y, params.iterations, seed)?)
            };
            let loo = if values.len() >= 5 {
                Some(leave_one_out(&values, &ap, &m, params.alpha)?)
            } else {
                None
            };
            cells.push(AnalysisCell {
                system: system.clone(),
                metric: metric.to_string(),
                original,
                partial: partial.result,
                p_perm,
                loo,
            });
        }
        let v: Vec<f64> = rows.iter().map(|r| r.v_i).collect();
        match median_split(&v, &ap) {
            Ok(s) => median_splits.push((system.clone(), s)),
            Err(e) => log::warn!("median split for {system}: {e}"),
        }
    }

    let mut families = Vec::new();
    for (block, name) in [(false, "original"), (true, "partial")] {
        let p: Vec<f64> = cells
            .iter()
            .map(|c| if block { c.partial.p_raw } else { c.original.p_raw })
            .collect();
        let adj = bh_fdr(&p)?;
        for (c, a) in cells.iter_mut().zip(adj) {
            let r = if block { &mut c.partial } else { &mut c.original };
            r.p_fdr = Some(a);
        }
        families.push(FdrFamily {
            name: name.into(),
            members: cells
                .iter()
                .map(|c| format!("{}/{}/{name}", c.system, c.metric))
                .collect(),
        });
    }
    Ok(AnalysisReport {
        params,
        narratives,
        cells,
        median_splits,
        families,
    })
}

fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

fn cell(r: &CorrelationResult) -> String {
    if r.degenerate {
        "n/a".into()
    } else {
        format!("{:+.3}{}", r.rho, stars(r.p_fdr))
    }
}

/// Text table with an original block and a partial (controlled for m_i)
/// block, one row per system and one column per metric.
pub fn render_correlation_table(report: &AnalysisReport) -> String {
    let systems: Vec<&str> = {
        let mut s: Vec<&str> = report.cells.iter().map(|c| c.system.as_str()).collect();
        s.dedup();
        s
    };
    let width = systems.iter().map(|s| s.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Spearman rho between per-narrative AP and narrative metrics (n = {}; BH-FDR per block: * p<.05, ** p<.01, *** p<.001)",
        report.narratives
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:width$}  {:>10}  {:>10}  |  {:>10}  {:>10}  {:>8}",
        "System", "D_i", "V_i", "D_i | m_i", "V_i | m_i", "p_perm V"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 62));
    for s in systems {
        let get = |m: &str| report.cells.iter().find(|c| c.system == s && c.metric == m);
        let (d, v) = (get("D_i"), get("V_i"));
        let fmt = |c: Option<&AnalysisCell>, partial: bool| {
            c.map(|c| cell(if partial { &c.partial } else { &c.original }))
                .unwrap_or_default()
        };
        let perm = v
            .and_then(|c| c.p_perm)
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "{:width$}  {:>10}  {:>10}  |  {:>10}  {:>10}  {:>8}",
            s,
            fmt(d, false),
            fmt(v, false),
            fmt(d, true),
            fmt(v, true),
            perm
        );
    }
    for f in &report.families {
        let _ = writeln!(out, "FDR family `{}`: {} tests", f.name, f.members.len());
    }
    if !report.median_splits.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Median split on V_i (values <= median go low):");
        for (s, m) in &report.median_splits {
            let _ = writeln!(
                out,
                "  {s:width$}  low {:.3} (n={})  high {:.3} (n={})  drop {:.1}%",
                m.low_mean, m.n_low, m.high_mean, m.n_high, m.drop_pct
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), [1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn monotone_and_reversed() {
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert_eq!(spearman(&x, &y).unwrap().rho, 1.0);
        let r: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &r).unwrap().rho, -1.0);
        assert_eq!(spearman(&x, &y).unwrap().p_raw, 0.0);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.rho, r.p_raw), (0.0, 1.0));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_against_table() {
        // rho = 0.5 with n = 12: t = 0.5 * sqrt(10 / 0.75) = 1.8257, two-sided p ≈ 0.0979.
        let p = t_approx_p(0.5, 12);
        assert!((p - 0.0979).abs() < 5e-4, "{p}");
    }

    #[test]
    fn bh_hand_example() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.03, 0.04]).unwrap(), [0.04, 0.04, 0.04, 0.04]);
        assert_eq!(bh_fdr(&[0.3]).unwrap(), [0.3]);
        assert_eq!(bh_fdr(&[1.0, 1.0]).unwrap(), [1.0, 1.0]);
        assert!(bh_fdr(&[1.5]).is_err());
        // Step-up: 0.04*3/3 = 0.04 caps the 0.03*3/2 = 0.045 of rank 2.
        assert_eq!(bh_fdr(&[0.04, 0.01, 0.03]).unwrap(), [0.04, 0.03, 0.04]);
    }

    #[test]
    fn forced_degeneracy() {
        let c = [1.0, 2.0, 4.0, 7.0, 11.0];
        let y: Vec<f64> = c.iter().map(|v| 3.0 * v).collect();
        let r = partial_spearman(&[5.0, 1.0, 4.0, 2.0, 3.0], &y, &c).unwrap().result;
        assert!(r.degenerate);
        assert_eq!((r.rho, r.p_raw), (0.0, 1.0));
    }

    #[test]
    fn constant_control_falls_back() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let p = partial_spearman(&x, &y, &[7.0; 5]).unwrap().result;
        assert!(p.control_constant);
        assert_eq!(p.rho, spearman(&x, &y).unwrap().rho);
    }

    #[test]
    fn orthogonal_control_leaves_rho() {
        // Control with zero sample covariance against x and y.
        let x = [1.0, -1.0, 2.0, -2.0, 0.5, -0.5];
        let y = [0.3, -0.2, 1.1, -0.9, -0.4, 0.1];
        // Gram-Schmidt: remove the components along 1, x and y from c.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in [vec![1.0; 6], x.to_vec(), y.to_vec()] {
            let mut u = v;
            for b in &basis {
                let d: f64 = u.iter().zip(b).map(|(a, b)| a * b).sum();
                u.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
            }
            let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            basis.push(u.into_iter().map(|a| a / n).collect());
        }
        let mut c = vec![1.0, 1.0, -1.0, -1.0, 2.0, -2.5];
        for b in &basis {
            let d: f64 = c.iter().zip(b).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
        }
        let plain = spearman(&x, &y).unwrap().rho;
        let part = partial_spearman(&x, &y, &c).unwrap().result.rho;
        assert!((plain - part).abs() < 1e-9, "{plain} vs {part}");
    }

    #[test]
    fn permutation_identical_residuals() {
        let x: Vec<f64> = vec![0.3, -1.2, 0.8, 2.1, -0.4, 1.7, -2.2, 0.05];
        let p = permutation_test(&x, &x, 10_000, 7).unwrap();
        assert!(p <= 0.01, "{p}");
        assert_eq!(p, permutation_test(&x, &x, 10_000, 7).unwrap());
        assert!(permutation_test(&x, &[1.0; 8], 100, 0).is_err());
    }

    #[test]
    fn permutation_independent_sanity_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let p = permutation_test(&x, &y, 2000, 3).unwrap();
        assert!((0.2..=1.0).contains(&p), "{p}");
    }

    #[test]
    fn loo_folds_match_recomputation() {
        let x = [0.1, 0.5, 0.3, 0.9, 0.7];
        let y = [0.2, 0.1, 0.4, 0.8, 0.3];
        let c = [10.0, 30.0, 20.0, 50.0, 40.0];
        let loo = leave_one_out(&x, &y, &c, 0.05).unwrap();
        assert_eq!(loo.folds.len(), 5);
        for (i, f) in loo.folds.iter().enumerate() {
            let drop = |v: &[f64]| -> Vec<f64> {
                v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &a)| a).collect()
            };
            assert_eq!(f, &partial_spearman(&drop(&x), &drop(&y), &drop(&c)).unwrap().result);
        }
        assert!(leave_one_out(&x[..4], &y[..4], &c[..4], 0.05).is_err());
    }

    #[test]
    fn median_split_cases() {
        let s = median_split(&[0.1, 0.9], &[1.0, 0.5]).unwrap();
        assert_eq!(s.drop_pct, 50.0);
        let s = median_split(&[0.1, 0.2, 0.3, 0.4], &[0.5; 4]).unwrap();
        assert_eq!(s.drop_pct, 0.0);
        assert!(median_split(&[0.3, 0.3, 0.3], &[1.0, 2.0, 3.0]).is_err());
        // Odd count: the median itself goes low.
        assert_eq!(median_split(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap().n_low, 2);
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariance(x in proptest::collection::vec(-3.0f64..3.0, 3..20), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = x.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let a = spearman(&x, &y).unwrap();
            let b = spearman(&ex, &y).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
        }

        #[test]
        fn bh_monotone_and_conservative(p in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            let adj = bh_fdr(&p).unwrap();
            for i in 0..p.len() {
                prop_assert!(adj[i] >= p[i]);
                for j in 0..p.len() {
                    if p[i] <= p[j] {
                        prop_assert!(adj[i] <= adj[j]);
                    }
                }
            }
        }
    }
}
