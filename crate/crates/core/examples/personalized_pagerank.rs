//! Personalized PageRank from one seed on a small path-with-hub graph.
//!
//!     cargo run --example personalized_pagerank

use specfi::graph::{personalized_pagerank, PprParams};

fn main() -> specfi::Result<()> {
    let edges = [(0, 1), (1, 2), (2, 3), (1, 4), (4, 5), (4, 6)];
    let mut adj = vec![Vec::new(); 8];
    for &(u, v) in &edges {
        adj[u].push((v, 1.0));
        adj[v].push((u, 1.0));
    }

    let r = personalized_pagerank(&adj, &[0], PprParams::default())?;
    println!("converged: {} after {} iterations", r.converged, r.iterations);
    for (node, s) in r.scores.iter().enumerate() {
        println!("  node {node}: {s:.5} {}", "#".repeat((s * 60.0) as usize));
    }
    println!("sum = {:.12}", r.scores.iter().sum::<f64>());

    let loose = PprParams { damping: 0.5, ..Default::default() };
    let r = personalized_pagerank(&adj, &[0, 7], loose)?;
    println!("\ndamping 0.5, seeds 0 and 7 (isolated): {:?}", r.scores.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>());
    Ok(())
}
