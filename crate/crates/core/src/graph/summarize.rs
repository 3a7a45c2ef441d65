use std::sync::Arc;
use std::thread;

use super::build::embed_nodes;
use super::{Community, Graph, NodeKind};
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::llm::{ChatModel, ChatRequest};

/// Communities smaller than this get no summary node.
pub const MIN_COMMUNITY_MEMBERS: usize = 3;

const MOCK_SUMMARY_TOKENS: usize = 60;

pub trait Summarizer: Send + Sync {
    /// Summarizes member contents, given most-connected first.
    fn summarize(&self, contents: &[String]) -> Result<String>;
}

/// Joins the member contents and keeps the first 60 whitespace tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSummarizer;

impl Summarizer for MockSummarizer {
    fn summarize(&self, contents: &[String]) -> Result<String> {
        Ok(contents
            .iter()
            .flat_map(|c| c.split_whitespace())
            .take(MOCK_SUMMARY_TOKENS)
            .collect::<Vec<_>>()
            .join(" "))
    }
}

pub const SUMMARY_SYSTEM_PROMPT: &str = "You write concise summaries of clusters of related statements.";

pub const SUMMARY_USER_TEMPLATE: &str = "The following statements and entities belong to one cluster of related content. Write a short paragraph that summarizes the common theme and the main claims.\n\n{members}";

pub struct LlmSummarizer {
    llm: Arc<dyn ChatModel>,
    pub max_tokens: u32,
    /// Member contents beyond this count are left out of the prompt.
    pub max_members: usize,
}

impl LlmSummarizer {
    pub fn new(llm: Arc<dyn ChatModel>) -> Self {
        LlmSummarizer {
            llm,
            max_tokens: 256,
            max_members: 40,
        }
    }
}

impl Summarizer for LlmSummarizer {
    fn summarize(&self, contents: &[String]) -> Result<String> {
        let members = contents
            .iter()
            .take(self.max_members)
            .map(|c| format!("- {c}"))
            .collect::<Vec<_>>()
            .join("\n");
        let request = ChatRequest {
            system: SUMMARY_SYSTEM_PROMPT.into(),
            user: SUMMARY_USER_TEMPLATE.replace("{members}", &members),
            temperature: 0.0,
            max_tokens: self.max_tokens,
            seed: Some(0),
        };
        self.llm.complete(&request)
    }
}

/// Member nodes a summary is built from and wired to: semantic units and
/// entities, or every member when there are none.
fn summary_sources(g: &Graph, c: &Community) -> Vec<usize> {
    let units: Vec<usize> = c
        .members
        .iter()
        .copied()
        .filter(|&m| matches!(g.nodes[m].kind, NodeKind::SemanticUnit | NodeKind::Entity))
        .collect();
    let mut sources = if units.is_empty() {
        c.members.iter().copied().collect()
    } else {
        units
    };
    sources.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    sources
}

/// Installs `communities` on the graph and attaches an embedded summary
/// node to each community with at least `min_members` members. Returns the
/// number of summaries created.
pub fn summarize_communities(
    g: &mut Graph,
    communities: Vec<Community>,
    summarizer: &dyn Summarizer,
    embedder: &Embedder,
    min_members: usize,
    max_in_flight: usize,
) -> Result<usize> {
    let covered: usize = communities.iter().map(|c| c.members.len()).sum();
    if covered != g.node_count() {
        return Err(Error::Invariant(format!(
            "communities cover {covered} of {} nodes",
            g.node_count()
        )));
    }
    g.communities = communities;

    let eligible: Vec<usize> = (0..g.communities.len())
        .filter(|&i| g.communities[i].members.len() >= min_members)
        .collect();
    let jobs: Vec<(usize, Vec<usize>, Vec<String>)> = eligible
        .into_iter()
        .map(|i| {
            let sources = summary_sources(g, &g.communities[i]);
            let contents = sources.iter().map(|&s| g.nodes[s].content.clone()).collect();
            (i, sources, contents)
        })
        .collect();

    let mut summaries: Vec<Option<String>> = Vec::with_capacity(jobs.len());
    for wave in jobs.chunks(max_in_flight.max(1)) {
        let results: Vec<Result<String>> = thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|(_, _, contents)| scope.spawn(move || summarizer.summarize(contents)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("summary worker panicked"))
                .collect()
        });
        for ((i, _, _), r) in wave.iter().zip(results) {
            summaries.push(match r {
                Ok(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
                Ok(_) => {
                    log::warn!("community {i}: empty summary, skipped");
                    None
                }
                Err(e) => {
                    log::warn!("community {i}: summary failed, skipped: {e}");
                    None
                }
            });
        }
    }

    let mut created = 0;
    for ((i, sources, _), summary) in jobs.into_iter().zip(summaries) {
        let Some(text) = summary else { continue };
        let node = g.add_node(NodeKind::HighLevelElement, text);
        for s in sources {
            g.add_edge(node, s, 1.0)?;
        }
        g.communities[i].members.insert(node);
        g.communities[i].summary_node = Some(node);
        created += 1;
    }
    embed_nodes(g, embedder)?;
    Ok(created)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::leiden::{leiden_partition, LeidenParams};
    use std::collections::BTreeSet;

    fn triangle_plus_pair() -> Graph {
        let mut g = Graph::new();
        let a = g.add_node(NodeKind::Entity, "alpha");
        let b = g.add_node(NodeKind::Entity, "beta");
        let c = g.add_node(NodeKind::Entity, "gamma");
        let d = g.add_node(NodeKind::Entity, "delta");
        let e = g.add_node(NodeKind::Entity, "epsilon");
        g.add_edge(a, b, 1.0).unwrap();
        g.add_edge(b, c, 1.0).unwrap();
        g.add_edge(a, c, 2.0).unwrap();
        g.add_edge(d, e, 1.0).unwrap();
        g
    }

    #[test]
    fn threshold_and_wiring() {
        let mut g = triangle_plus_pair();
        let communities = leiden_partition(&g, LeidenParams::default());
        assert_eq!(communities.len(), 2);
        let embedder = Embedder::mock(0, 16);
        let n = summarize_communities(&mut g, communities, &MockSummarizer, &embedder, 3, 2).unwrap();
        assert_eq!(n, 1);
        let hle: Vec<_> = g.nodes_of_kind(NodeKind::HighLevelElement).collect();
        assert_eq!(hle.len(), 1);
        // Equal degrees, so member order falls back to node id.
        assert_eq!(hle[0].content, "alpha beta gamma");
        assert_eq!(g.degree(hle[0].id), 3);
        g.check_invariants().unwrap();
        let small = g.communities.iter().find(|c| c.members.contains(&3)).unwrap();
        assert_eq!(small.summary_node, None);
    }

    #[test]
    fn mock_summary_depends_only_on_members() {
        let contents: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let s = MockSummarizer.summarize(&contents).unwrap();
        assert_eq!(s.split_whitespace().count(), 60);
        assert_eq!(s, MockSummarizer.summarize(&contents).unwrap());
    }

    struct Broken;
    impl Summarizer for Broken {
        fn summarize(&self, _: &[String]) -> Result<String> {
            Err(Error::Provider {
                attempts: 1,
                message: "down".into(),
            })
        }
    }

    #[test]
    fn failures_leave_community_unsummarized() {
        let mut g = triangle_plus_pair();
        let communities = leiden_partition(&g, LeidenParams::default());
        let n = summarize_communities(&mut g, communities, &Broken, &Embedder::mock(0, 8), 3, 1).unwrap();
        assert_eq!(n, 0);
        assert!(g.communities.iter().all(|c| c.summary_node.is_none()));
    }

    #[test]
    fn rejects_non_partition() {
        let mut g = triangle_plus_pair();
        let c = vec![Community {
            id: 0,
            members: BTreeSet::from([0, 1]),
            summary_node: None,
        }];
        assert!(summarize_communities(&mut g, c, &MockSummarizer, &Embedder::mock(0, 8), 3, 1).is_err());
    }
}
