//! Heterogeneous narrative graph: text chunks, entities, relationships,
//! semantic units and community-summary ("high-level element") nodes.
//!
//! Construction extracts units from every reference text, Leiden partitions
//! the graph, communities get summary nodes wired back to their members, and
//! search seeds Personalized PageRank from embedding and entity matches.

mod build;
mod extract;
pub mod leiden;
pub mod ppr;
mod search;
mod summarize;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use build::{build_graph, GraphBuildReport};
pub use extract::{
    extract_units, normalize_entity, Extraction, Extractor, LlmExtractor, MockExtractor,
    Relationship,
};
pub use leiden::{leiden, leiden_partition, modularity, LeidenParams};
pub use ppr::{personalized_pagerank, PprParams, PprResult};
pub use search::{graph_search, top_high_level_element, SearchHit, SearchParams, SearchResult};
pub use summarize::{
    summarize_communities, LlmSummarizer, MockSummarizer, Summarizer, MIN_COMMUNITY_MEMBERS,
};

use crate::dense::DenseIndex;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TextChunk,
    Entity,
    Relationship,
    SemanticUnit,
    HighLevelElement,
}

impl NodeKind {
    pub fn requires_embedding(self) -> bool {
        matches!(
            self,
            NodeKind::TextChunk | NodeKind::SemanticUnit | NodeKind::HighLevelElement
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    pub content: String,
    pub embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub id: usize,
    pub members: BTreeSet<usize>,
    pub summary_node: Option<usize>,
}

/// Undirected weighted graph; node ids are indices into `nodes`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    pub nodes: Vec<GraphNode>,
    adjacency: Vec<BTreeMap<usize, f64>>,
    pub communities: Vec<Community>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, kind: NodeKind, content: impl Into<String>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GraphNode {
            id,
            kind,
            content: content.into(),
            embedding: None,
        });
        self.adjacency.push(BTreeMap::new());
        id
    }

    /// Adds `weight` to the edge `{u, v}`, creating it if needed.
    pub fn add_edge(&mut self, u: usize, v: usize, weight: f64) -> Result<()> {
        if u == v {
            return Err(Error::Invariant(format!("self-loop on node {u}")));
        }
        if u >= self.nodes.len() || v >= self.nodes.len() {
            return Err(Error::Invariant(format!("edge ({u}, {v}) references a missing node")));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Invariant(format!("edge ({u}, {v}) has weight {weight}")));
        }
        *self.adjacency[u].entry(v).or_insert(0.0) += weight;
        *self.adjacency[v].entry(u).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[u].iter().map(|(&v, &w)| (v, w))
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency.get(u).and_then(|m| m.get(&v)).copied()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn strength(&self, u: usize) -> f64 {
        self.adjacency[u].values().sum()
    }

    /// Sorted adjacency lists, the input format of the graph algorithms.
    pub fn adjacency_lists(&self) -> Vec<Vec<(usize, f64)>> {
        self.adjacency
            .iter()
            .map(|m| m.iter().map(|(&v, &w)| (v, w)).collect())
            .collect()
    }

    /// Each undirected edge once, with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, m)| {
            m.iter()
                .filter(move |(&v, _)| u < v)
                .map(move |(&v, &w)| (u, v, w))
        })
    }

    pub fn community_of(&self, node: usize) -> Option<&Community> {
        self.communities.iter().find(|c| c.members.contains(&node))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (u, m) in self.adjacency.iter().enumerate() {
            for (&v, &w) in m {
                if u == v || v >= self.nodes.len() || !(w.is_finite() && w > 0.0) {
                    return Err(Error::Invariant(format!("bad edge ({u}, {v}, {w})")));
                }
                if self.adjacency[v].get(&u) != Some(&w) {
                    return Err(Error::Invariant(format!("asymmetric edge ({u}, {v})")));
                }
            }
        }
        for n in &self.nodes {
            if n.kind.requires_embedding() && n.embedding.is_none() {
                return Err(Error::Invariant(format!("{:?} node {} lacks an embedding", n.kind, n.id)));
            }
        }
        if !self.communities.is_empty() {
            let mut seen = BTreeSet::new();
            for c in &self.communities {
                for &m in &c.members {
                    if !seen.insert(m) {
                        return Err(Error::Invariant(format!("node {m} in two communities")));
                    }
                }
                if let Some(s) = c.summary_node {
                    if !c.members.contains(&s) || self.nodes[s].kind != NodeKind::HighLevelElement {
                        return Err(Error::Invariant(format!("community {} has a bad summary node", c.id)));
                    }
                }
            }
            if seen.len() != self.nodes.len() {
                return Err(Error::Invariant("communities do not cover every node".into()));
            }
        }
        Ok(())
    }

    /// Writes `<name>.jsonl` plus the embedded nodes as `<name>.vectors.{bin,ids.json}`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut out = Vec::new();
        for n in &self.nodes {
            serde_json::to_writer(
                &mut out,
                &Record::Node {
                    id: n.id,
                    kind: n.kind,
                    content: n.content.clone(),
                },
            )?;
            out.push(b'\n');
        }
        for (u, v, w) in self.edges() {
            serde_json::to_writer(&mut out, &Record::Edge { u, v, w })?;
            out.push(b'\n');
        }
        for c in &self.communities {
            serde_json::to_writer(&mut out, &Record::Community(c.clone()))?;
            out.push(b'\n');
        }
        let path = dir.join(format!("{name}.jsonl"));
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

        let embedded: Vec<&GraphNode> = self.nodes.iter().filter(|n| n.embedding.is_some()).collect();
        if !embedded.is_empty() {
            let index = DenseIndex::new(
                embedded.iter().map(|n| n.id.to_string()).collect(),
                embedded.iter().map(|n| n.embedding.clone().unwrap()).collect(),
                "graph",
            )?;
            index.save(dir, &format!("{name}.vectors"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.jsonl"));
        let raw = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut g = Graph::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                Record::Node { id, kind, content } => {
                    let got = g.add_node(kind, content);
                    if got != id {
                        return Err(Error::Parse {
                            path: path.clone(),
                            line: i + 1,
                            message: format!("node id {id} out of sequence"),
                        });
                    }
                }
                Record::Edge { u, v, w } => g.add_edge(u, v, w)?,
                Record::Community(c) => g.communities.push(c),
            }
        }
        let vectors = format!("{name}.vectors");
        if dir.join(format!("{vectors}.ids.json")).exists() {
            let index = DenseIndex::load(dir, &vectors)?;
            for (id, row) in index.ids().iter().zip(index.rows()) {
                let id: usize = id
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad node id `{id}` in vectors")))?;
                g.nodes
                    .get_mut(id)
                    .ok_or_else(|| Error::InvalidInput(format!("vector for missing node {id}")))?
                    .embedding = Some(row.clone());
            }
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "section", rename_all = "snake_case")]
enum Record {
    Node {
        id: usize,
        kind: NodeKind,
        content: String,
    },
    Edge {
        u: usize,
        v: usize,
        w: f64,
    },
    Community(Community),
}

/// Connected components of the subgraph induced by `members`.
pub(crate) fn induced_components(
    adj: &[Vec<(usize, f64)>],
    members: &[usize],
) -> Vec<Vec<usize>> {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut comps = Vec::new();
    for &start in members {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if inside.contains(&v) && seen.insert(v) {
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_accumulate_and_reject_self_loops() {
        let mut g = Graph::new();
        let a = g.add_node(NodeKind::Entity, "a");
        let b = g.add_node(NodeKind::Entity, "b");
        g.add_edge(a, b, 1.0).unwrap();
        g.add_edge(b, a, 2.0).unwrap();
        assert_eq!(g.edge_weight(a, b), Some(3.0));
        assert_eq!(g.edge_count(), 1);
        assert!(g.add_edge(a, a, 1.0).is_err());
        assert!(g.add_edge(a, 9, 1.0).is_err());
        assert!(g.add_edge(a, b, 0.0).is_err());
        g.check_invariants().unwrap();
    }

    #[test]
    fn components_of_induced_subgraph() {
        let adj = vec![vec![(1, 1.0)], vec![(0, 1.0), (2, 1.0)], vec![(1, 1.0)], vec![]];
        assert_eq!(induced_components(&adj, &[0, 2, 3]), vec![vec![0], vec![2], vec![3]]);
        assert_eq!(induced_components(&adj, &[0, 1, 2]), vec![vec![0, 1, 2]]);
    }
}
