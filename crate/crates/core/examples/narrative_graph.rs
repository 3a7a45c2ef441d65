//! Builds the unit graph over the synthetic train split with the mock
//! extractor, partitions it, adds summary nodes and searches it.
//!
//!     cargo run --example narrative_graph

use specfi::embedding::{Embedder, NARRATIVE_INSTRUCTION};
use specfi::graph::{
    build_graph, graph_search, leiden_partition, summarize_communities, top_high_level_element,
    LeidenParams, MockExtractor, MockSummarizer, NodeKind, SearchParams, MIN_COMMUNITY_MEMBERS,
};
use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let ds = synthetic::dataset()?.without_train_labels();
    let embedder = Embedder::mock(0, 1024);
    let (mut g, report) = build_graph(ds.train_documents(), &MockExtractor, &embedder, 4)?;
    for kind in [NodeKind::TextChunk, NodeKind::Entity, NodeKind::Relationship, NodeKind::SemanticUnit] {
        println!("{kind:?}: {}", g.nodes_of_kind(kind).count());
    }
    println!("edges: {}, extraction failures: {}", g.edge_count(), report.failures.len());

    let communities = leiden_partition(&g, LeidenParams::default());
    let n = summarize_communities(&mut g, communities, &MockSummarizer, &embedder, MIN_COMMUNITY_MEMBERS, 4)?;
    println!("{} communities, {n} summaries", g.communities.len());
    g.check_invariants()?;

    for q in ds.queries.iter().take(3) {
        let v = embedder.embed_one(&q.description, NARRATIVE_INSTRUCTION)?;
        let r = graph_search(&q.description, &v, &g, SearchParams::default())?;
        println!("\n{}: {} seeds, {} hits", q.description, r.seeds.len(), r.hits.len());
        if let Some((text, node)) = top_high_level_element(&r, &g) {
            println!("  top summary (node {node}): {}", text.chars().take(100).collect::<String>());
        }
    }
    Ok(())
}
