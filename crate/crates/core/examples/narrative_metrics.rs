//! Distinctness and variance of the synthetic narratives.
//!
//!     cargo run --example narrative_metrics

use specfi::embedding::Embedder;
use specfi::narrative_metrics::{build_sets, distinctness, variance};
use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let ds = synthetic::dataset()?;
    // A different seed keeps the metric space apart from the retrieval space.
    let embedder = Embedder::mock(1, 1024);
    let sets = build_sets(&ds, &embedder)?;
    let d = distinctness(&sets)?;
    println!("{:<6} {:>4} {:>8} {:>8}", "id", "m_i", "D_i", "V_i");
    for s in &sets {
        println!("{:<6} {:>4} {:>8.4} {:>8.4}", s.narrative_id, s.m_i, d[&s.narrative_id], variance(s));
    }
    Ok(())
}
