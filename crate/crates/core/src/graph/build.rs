use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};

use super::extract::{extract_units, Extraction, Extractor};
use super::{Graph, NodeKind};
use crate::corpus::Document;
use crate::embedding::Embedder;
use crate::error::{Error, Result};

/// Share of documents whose extraction may fail before the build aborts.
const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphBuildReport {
    pub documents: usize,
    /// Document id and error message of every skipped extraction.
    pub failures: Vec<(String, String)>,
    /// Text-chunk node of each document.
    pub chunk_nodes: BTreeMap<String, usize>,
}

fn extract_all(
    docs: &[&Document],
    extractor: &dyn Extractor,
    max_in_flight: usize,
) -> Vec<Result<Extraction>> {
    let mut out = Vec::with_capacity(docs.len());
    for wave in docs.chunks(max_in_flight.max(1)) {
        let results: Vec<Result<Extraction>> = thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|d| scope.spawn(move || extract_units(&d.text, extractor)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("extraction worker panicked"))
                .collect()
        });
        out.extend(results);
    }
    out
}

/// Builds the unit graph over `docs`. Only document ids and texts are read.
pub fn build_graph<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    extractor: &dyn Extractor,
    embedder: &Embedder,
    max_in_flight: usize,
) -> Result<(Graph, GraphBuildReport)> {
    let docs: Vec<&Document> = docs.into_iter().collect();
    if docs.is_empty() {
        return Err(Error::InvalidInput("cannot build a graph from an empty corpus".into()));
    }
    let extractions = extract_all(&docs, extractor, max_in_flight);

    let mut g = Graph::new();
    let mut report = GraphBuildReport {
        documents: docs.len(),
        ..Default::default()
    };
    let mut entity_nodes: BTreeMap<String, usize> = BTreeMap::new();
    let mut relationship_nodes: BTreeMap<(String, String, String), usize> = BTreeMap::new();

    for (doc, extraction) in docs.iter().zip(extractions) {
        let chunk = g.add_node(NodeKind::TextChunk, doc.text.clone());
        report.chunk_nodes.insert(doc.id.clone(), chunk);
        let ex = match extraction {
            Ok(ex) => ex,
            Err(e) => {
                log::warn!("extraction failed for document {}: {e}", doc.id);
                report.failures.push((doc.id.clone(), e.to_string()));
                continue;
            }
        };
        let mut local = Vec::with_capacity(ex.entities.len());
        for name in &ex.entities {
            let id = *entity_nodes
                .entry(name.clone())
                .or_insert_with(|| g.add_node(NodeKind::Entity, name.clone()));
            g.add_edge(chunk, id, 1.0)?;
            local.push(id);
        }
        for (i, &a) in local.iter().enumerate() {
            for &b in &local[i + 1..] {
                g.add_edge(a, b, 1.0)?;
            }
        }
        for r in &ex.relationships {
            let key = (r.source.clone(), r.predicate.clone(), r.target.clone());
            let id = match relationship_nodes.get(&key) {
                Some(&id) => id,
                None => {
                    let id = g.add_node(
                        NodeKind::Relationship,
                        format!("{} {} {}", r.source, r.predicate, r.target),
                    );
                    g.add_edge(id, entity_nodes[&r.source], 1.0)?;
                    g.add_edge(id, entity_nodes[&r.target], 1.0)?;
                    relationship_nodes.insert(key, id);
                    id
                }
            };
            if g.edge_weight(chunk, id).is_none() {
                g.add_edge(chunk, id, 1.0)?;
            }
        }
        for unit in &ex.semantic_units {
            let id = g.add_node(NodeKind::SemanticUnit, unit.clone());
            g.add_edge(chunk, id, 1.0)?;
        }
    }

    let failed = report.failures.len();
    if failed as f64 > MAX_FAILURE_SHARE * docs.len() as f64 {
        return Err(Error::Extraction {
            message: format!("{failed} of {} documents failed extraction", docs.len()),
            raw: report
                .failures
                .first()
                .map(|f| f.1.clone())
                .unwrap_or_default(),
        });
    }

    embed_nodes(&mut g, embedder)?;
    Ok((g, report))
}

/// Embeds every node of an embedding-bearing kind that has no vector yet.
pub(crate) fn embed_nodes(g: &mut Graph, embedder: &Embedder) -> Result<()> {
    let todo: Vec<usize> = g
        .nodes
        .iter()
        .filter(|n| n.kind.requires_embedding() && n.embedding.is_none())
        .map(|n| n.id)
        .collect();
    if todo.is_empty() {
        return Ok(());
    }
    let texts: Vec<String> = todo.iter().map(|&i| g.nodes[i].content.clone()).collect();
    let vectors = embedder.embed_documents(&texts)?;
    for (i, v) in todo.into_iter().zip(vectors) {
        g.nodes[i].embedding = Some(v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::graph::MockExtractor;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, Vec::<String>::new(), Split::Train)
    }

    #[test]
    fn single_doc_is_a_star_around_its_chunk() {
        let d = doc("a", "Solar panels beat Coal.");
        let (g, report) = build_graph([&d], &MockExtractor, &Embedder::mock(1, 32), 2).unwrap();
        let chunk = report.chunk_nodes["a"];
        for n in 0..g.node_count() {
            if n != chunk {
                assert!(g.edge_weight(chunk, n).is_some(), "node {n} not attached");
            }
        }
        g.check_invariants().unwrap();
    }

    #[test]
    fn shared_entities_merge_and_cooccurrence_counts() {
        let docs: Vec<Document> = (0..3)
            .map(|i| doc(&format!("d{i}"), &format!("The IPCC warned Europe again, {i} times.")))
            .collect();
        let (g, _) = build_graph(&docs, &MockExtractor, &Embedder::mock(1, 32), 2).unwrap();
        let ipcc: Vec<_> = g.nodes_of_kind(NodeKind::Entity).filter(|n| n.content == "ipcc").collect();
        assert_eq!(ipcc.len(), 1);
        let europe = g.nodes_of_kind(NodeKind::Entity).find(|n| n.content == "europe").unwrap();
        assert!(g.degree(ipcc[0].id) >= 2);
        assert_eq!(g.edge_weight(ipcc[0].id, europe.id), Some(3.0));
    }

    struct Failing;
    impl Extractor for Failing {
        fn extract(&self, text: &str) -> Result<Extraction> {
            if text.starts_with("bad") {
                Err(Error::Extraction {
                    message: "malformed".into(),
                    raw: text.into(),
                })
            } else {
                MockExtractor.extract(text)
            }
        }
    }

    #[test]
    fn failure_budget() {
        let mut docs: Vec<Document> = (0..10).map(|i| doc(&format!("d{i}"), "Good Text here.")).collect();
        docs[0] = doc("d0", "bad one");
        let (_, report) = build_graph(&docs, &Failing, &Embedder::mock(1, 16), 4).unwrap();
        assert_eq!(report.failures.len(), 1);
        docs[1] = doc("d1", "bad two");
        assert!(build_graph(&docs, &Failing, &Embedder::mock(1, 16), 4).is_err());
    }

    #[test]
    fn deterministic_under_mock() {
        let docs = vec![doc("1", "Alpha met Beta. Beta left."), doc("2", "Gamma saw Alpha.")];
        let e = Embedder::mock(3, 16);
        let a = build_graph(&docs, &MockExtractor, &e, 1).unwrap().0;
        let b = build_graph(&docs, &MockExtractor, &e, 3).unwrap().0;
        assert_eq!(a, b);
    }
}
