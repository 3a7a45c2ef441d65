use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ppr::{personalized_pagerank, PprParams};
use super::{Graph, NodeKind};
use crate::embedding::{dot, EmbeddingVector};
use crate::error::{Error, Result};
use crate::sparse::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Embedded nodes taken as seeds by similarity.
    pub seed_count: usize,
    pub ppr: PprParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            seed_count: 10,
            ppr: PprParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub node: usize,
    pub kind: NodeKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub seeds: Vec<usize>,
    /// Nodes with positive score, best first, ties by lower id.
    pub hits: Vec<SearchHit>,
    pub converged: bool,
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Seeds PPR with the nodes most similar to the query plus every entity
/// whose normalized form occurs in the query on word boundaries.
pub fn graph_search(
    query: &str,
    query_embedding: &EmbeddingVector,
    graph: &Graph,
    params: SearchParams,
) -> Result<SearchResult> {
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for n in &graph.nodes {
        if let Some(e) = &n.embedding {
            if e.dimension() != query_embedding.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: e.dimension(),
                    actual: query_embedding.dimension(),
                });
            }
            scored.push((n.id, dot(e.values(), query_embedding.values())));
        }
    }
    if scored.is_empty() {
        return Err(Error::InvalidInput("graph has no embedded nodes".into()));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut seeds: BTreeSet<usize> = scored.iter().take(params.seed_count.max(1)).map(|s| s.0).collect();

    let query_tokens = tokenize(query);
    for n in graph.nodes_of_kind(NodeKind::Entity) {
        if contains_run(&query_tokens, &tokenize(&n.content)) {
            seeds.insert(n.id);
        }
    }

    let seeds: Vec<usize> = seeds.into_iter().collect();
    let ppr = personalized_pagerank(&graph.adjacency_lists(), &seeds, params.ppr)?;
    let mut hits: Vec<SearchHit> = ppr
        .scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(node, &score)| SearchHit {
            node,
            kind: graph.nodes[node].kind,
            score,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.node.cmp(&b.node))
    });
    Ok(SearchResult {
        seeds,
        hits,
        converged: ppr.converged,
    })
}

/// Summary text and node id of the best-ranked high-level element, or
/// `None` when the result holds no summary node.
pub fn top_high_level_element(result: &SearchResult, graph: &Graph) -> Option<(String, usize)> {
    result
        .hits
        .iter()
        .find(|h| h.kind == NodeKind::HighLevelElement)
        .map(|h| (graph.nodes[h.node].content.clone(), h.node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::mock_embed;

    fn embedded(g: &mut Graph, kind: NodeKind, text: &str) -> usize {
        let id = g.add_node(kind, text);
        g.nodes[id].embedding = Some(mock_embed(text, 0, 32));
        id
    }

    #[test]
    fn single_node_graph() {
        let mut g = Graph::new();
        let n = embedded(&mut g, NodeKind::TextChunk, "only text");
        let r = graph_search("only", &mock_embed("only", 0, 32), &g, SearchParams::default()).unwrap();
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.hits[0].node, n);
    }

    #[test]
    fn entity_surface_in_query_is_seed() {
        let mut g = Graph::new();
        let params = SearchParams { seed_count: 1, ..Default::default() };
        let c = embedded(&mut g, NodeKind::TextChunk, "warming report");
        let e = g.add_node(NodeKind::Entity, "ipcc");
        let far = g.add_node(NodeKind::Entity, "ipc");
        g.add_edge(c, e, 1.0).unwrap();
        g.add_edge(c, far, 1.0).unwrap();
        let r = graph_search("What the IPCC says", &mock_embed("x", 0, 32), &g, params).unwrap();
        assert!(r.seeds.contains(&e));
        assert!(!r.seeds.contains(&far));
    }

    #[test]
    fn no_embedded_nodes_is_an_error() {
        let mut g = Graph::new();
        g.add_node(NodeKind::Entity, "a");
        assert!(graph_search("a", &mock_embed("a", 0, 8), &g, SearchParams::default()).is_err());
    }

    #[test]
    fn summary_ties_go_to_lower_id() {
        let mut g = Graph::new();
        let c = embedded(&mut g, NodeKind::TextChunk, "centre");
        let h1 = embedded(&mut g, NodeKind::HighLevelElement, "left summary");
        let h2 = embedded(&mut g, NodeKind::HighLevelElement, "right summary");
        g.add_edge(c, h1, 1.0).unwrap();
        g.add_edge(c, h2, 1.0).unwrap();
        let params = SearchParams { seed_count: 1, ..Default::default() };
        let r = graph_search("centre", &mock_embed("centre", 0, 32), &g, params).unwrap();
        assert_eq!(r.seeds, vec![c]);
        assert_eq!(top_high_level_element(&r, &g), Some(("left summary".into(), h1)));
    }

    #[test]
    fn no_summary_signal() {
        let mut g = Graph::new();
        embedded(&mut g, NodeKind::TextChunk, "text");
        let r = graph_search("text", &mock_embed("text", 0, 32), &g, SearchParams::default()).unwrap();
        assert_eq!(top_high_level_element(&r, &g), None);
    }
}
