//! Partial Spearman analysis of AP against D_i and V_i on a small table.
//!
//!     cargo run --example correlation_analysis [table.csv]
//!
//! The table has columns `narrative_id,m_i,D_i,V_i,ap_<system>...`.

use specfi::narrative_metrics::MetricTable;
use specfi::stats::{analyze, partial_spearman, render_correlation_table, spearman, AnalysisParams};

const DEMO: &str = "narrative_id,m_i,D_i,V_i,ap_a,ap_b
n1,12,0.31,0.52,0.61,0.40
n2,30,0.28,0.61,0.44,0.35
n3,8,0.35,0.48,0.71,0.52
n4,21,0.22,0.66,0.30,0.22
n5,15,0.30,0.57,0.52,0.41
n6,40,0.19,0.70,0.25,0.18
n7,10,0.33,0.50,0.66,0.49
n8,25,0.26,0.63,0.38,0.30
";

fn main() -> specfi::Result<()> {
    let table = match std::env::args().nth(1) {
        Some(p) => MetricTable::load(p.as_ref())?,
        None => MetricTable::from_csv(DEMO, "demo", true)?,
    };
    let rows: Vec<_> = table.rows.values().collect();
    let v: Vec<f64> = rows.iter().map(|r| r.v_i).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.m_i as f64).collect();
    if let Some(system) = table.systems().first() {
        let ap: Vec<f64> = rows.iter().map(|r| r.ap[system]).collect();
        let plain = spearman(&v, &ap)?;
        let partial = partial_spearman(&v, &ap, &m)?;
        println!("{system}: rho {:+.3} (p {:.4}), controlling for m_i {:+.3} (p {:.4})\n",
            plain.rho, plain.p_raw, partial.result.rho, partial.result.p_raw);
    }
    let report = analyze(&table, AnalysisParams { iterations: 5000, ..Default::default() })?;
    print!("{}", render_correlation_table(&report));
    Ok(())
}
