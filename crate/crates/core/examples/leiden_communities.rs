//! Leiden on two weighted cliques joined by a bridge, plus an isolated pair.
//!
//!     cargo run --example leiden_communities

use specfi::graph::{leiden, modularity, LeidenParams};

fn main() {
    let edges = [
        (0, 1, 2.0), (0, 2, 2.0), (1, 2, 2.0), (2, 3, 0.5),
        (3, 4, 2.0), (3, 5, 2.0), (4, 5, 2.0),
        (6, 7, 1.0),
    ];
    let mut adj = vec![Vec::new(); 8];
    for &(u, v, w) in &edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }

    for seed in 0..3 {
        let params = LeidenParams { seed, ..Default::default() };
        let membership = leiden(&adj, params);
        println!(
            "seed {seed}: {membership:?}  Q = {:.4}",
            modularity(&adj, &membership, params.resolution)
        );
    }

    let coarse = LeidenParams { resolution: 0.2, ..Default::default() };
    let m = leiden(&adj, coarse);
    println!("resolution 0.2: {m:?}  Q = {:.4}", modularity(&adj, &m, 0.2));
}
