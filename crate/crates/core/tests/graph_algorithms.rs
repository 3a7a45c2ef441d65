mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use common::adjacency;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use specfi::corpus::{Document, Split};
use specfi::embedding::Embedder;
use specfi::graph::{
    build_graph, leiden, modularity, personalized_pagerank, LeidenParams, LlmExtractor, NodeKind, PprParams,
};
use specfi::llm::{ChatModel, ChatRequest};

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v, rng.gen_range(0.1..2.0)));
            }
        }
    }
    edges
}

/// Dense transition matrix iterated until the update stops changing at all.
fn dense_ppr(n: usize, edges: &[(usize, usize, f64)], seeds: &[usize], alpha: f64) -> Vec<f64> {
    let mut w = vec![vec![0.0; n]; n];
    for &(u, v, x) in edges {
        w[u][v] += x;
        w[v][u] += x;
    }
    let strength: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
    let seed_set: BTreeSet<usize> = seeds.iter().copied().collect();
    let s: Vec<f64> = (0..n)
        .map(|i| if seed_set.contains(&i) { 1.0 / seed_set.len() as f64 } else { 0.0 })
        .collect();
    // m[v][u]: probability of stepping u -> v; dangling columns jump to the seeds.
    let mut m = vec![vec![0.0; n]; n];
    for u in 0..n {
        for v in 0..n {
            m[v][u] = if strength[u] > 0.0 { w[u][v] / strength[u] } else { s[v] };
        }
    }
    let mut r = s.clone();
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|v| (1.0 - alpha) * s[v] + alpha * (0..n).map(|u| m[v][u] * r[u]).sum::<f64>())
            .collect();
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < 1e-15 {
            break;
        }
    }
    r
}

#[test]
fn ppr_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = 50;
        let edges = random_graph(&mut rng, n, 0.06);
        let n_seeds = rng.gen_range(1..=3);
        let seeds: Vec<usize> = (0..n_seeds).map(|_| rng.gen_range(0..n)).collect();
        let got = personalized_pagerank(&adjacency(n, &edges), &seeds, PprParams::default()).unwrap();
        assert!(got.converged);
        let want = dense_ppr(n, &edges, &seeds, 0.85);
        for (a, b) in got.scores.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        assert!((got.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(worst < 1e-8, "worst per-node error {worst:e}");
}

fn relabel(edges: &[(usize, usize, f64)], perm: &[usize]) -> Vec<(usize, usize, f64)> {
    edges.iter().map(|&(u, v, w)| (perm[u], perm[v], w)).collect()
}

#[test]
fn ppr_is_label_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 30;
    let edges = random_graph(&mut rng, n, 0.15);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let a = personalized_pagerank(&adjacency(n, &edges), &[0, 5], PprParams::default()).unwrap();
    let b = personalized_pagerank(&adjacency(n, &relabel(&edges, &perm)), &[perm[0], perm[5]], PprParams::default()).unwrap();
    for (v, &p) in perm.iter().enumerate() {
        assert!((a.scores[v] - b.scores[p]).abs() < 1e-9);
    }
}

/// Same partition up to community names.
fn canonical(members: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (v, &c) in members.iter().enumerate() {
        groups.entry(c).or_default().insert(v);
    }
    groups.into_values().collect()
}

#[test]
fn leiden_is_label_invariant_on_clear_structure() {
    // Four dense blocks with sparse links: the partition is unambiguous.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 40;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u / 10 == v / 10 { 0.7 } else { 0.02 };
            if rng.gen_bool(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let a = leiden(&adjacency(n, &edges), LeidenParams::default());
    let b = leiden(&adjacency(n, &relabel(&edges, &perm)), LeidenParams::default());
    let mapped: Vec<usize> = (0..n).map(|v| b[perm[v]]).collect();
    assert_eq!(canonical(&a), canonical(&mapped));
    assert_eq!(canonical(&a).len(), 4);
    let q = modularity(&adjacency(n, &edges), &a, 1.0);
    assert!((q - modularity(&adjacency(n, &relabel(&edges, &perm)), &b, 1.0)).abs() < 1e-12);
}

#[test]
fn leiden_finds_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        // Disjoint cliques: each component is its own modularity optimum.
        // Extra chords on sparse components may split them, but never join two.
        let mut cliques = Vec::new();
        let mut sparse = Vec::new();
        let mut components = Vec::new();
        let mut next = 0;
        for _ in 0..rng.gen_range(2..6) {
            let size = rng.gen_range(1..6);
            let nodes: Vec<usize> = (next..next + size).collect();
            next += size;
            for (i, &u) in nodes.iter().enumerate() {
                for &v in &nodes[i + 1..] {
                    cliques.push((u, v, rng.gen_range(0.5..2.0)));
                }
            }
            for w in nodes.windows(2) {
                sparse.push((w[0], w[1], 1.0));
            }
            components.push(nodes.into_iter().collect::<BTreeSet<_>>());
        }
        let want: BTreeSet<BTreeSet<usize>> = components.iter().cloned().collect();
        let m = leiden(&adjacency(next, &cliques), LeidenParams::default());
        assert_eq!(canonical(&m), want, "{cliques:?}");

        let m = leiden(&adjacency(next, &sparse), LeidenParams::default());
        for group in canonical(&m) {
            assert!(components.iter().any(|c| group.is_subset(c)), "{group:?} spans components");
        }
    }
}

#[derive(Deserialize)]
struct FixtureCase {
    id: String,
    text: String,
    reply: String,
}

/// Answers extraction prompts from recorded replies keyed by the prompt's text.
struct FixtureModel {
    cases: Vec<FixtureCase>,
    calls: AtomicUsize,
}

impl ChatModel for FixtureModel {
    fn model(&self) -> &str {
        "fixture"
    }

    fn complete(&self, request: &ChatRequest) -> specfi::Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let case = self
            .cases
            .iter()
            .find(|c| request.user.ends_with(&format!("Text: {}", c.text)))
            .expect("prompt for an unrecorded text");
        Ok(case.reply.clone())
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[test]
fn replays_recorded_extractions() {
    let raw = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/extractions.json")).unwrap();
    let cases: Vec<FixtureCase> = serde_json::from_str(&raw).unwrap();
    let docs: Vec<Document> = cases
        .iter()
        .map(|c| Document::new(c.id.clone(), c.text.clone(), Vec::<String>::new(), Split::Train))
        .collect();
    let model = std::sync::Arc::new(FixtureModel { cases, calls: AtomicUsize::new(0) });
    let extractor = LlmExtractor::new(model.clone());
    let (graph, report) = build_graph(&docs, &extractor, &Embedder::mock(0, 64), 2).unwrap();
    assert_eq!(model.calls(), docs.len());
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    graph.check_invariants().unwrap();

    let entities: BTreeSet<&str> = graph.nodes_of_kind(NodeKind::Entity).map(|n| n.content.as_str()).collect();
    let want: BTreeSet<&str> = ["arctic sea ice", "satellites", "co2", "plants", "wind turbines", "germany", "electricity prices"].into();
    assert_eq!(entities, want);
    assert_eq!(graph.nodes_of_kind(NodeKind::TextChunk).count(), 3);
    assert_eq!(graph.nodes_of_kind(NodeKind::SemanticUnit).count(), 5);
    // One reply repeats a relationship; it is stored once. One names an entity
    // that was not extracted; it is dropped.
    assert_eq!(graph.nodes_of_kind(NodeKind::Relationship).count(), 3);

    // "co2" appears in two documents and links both chunks.
    let co2 = graph.nodes_of_kind(NodeKind::Entity).find(|n| n.content == "co2").unwrap().id;
    let chunks: BTreeSet<usize> = graph
        .neighbors(co2)
        .filter(|(v, _)| graph.nodes[*v].kind == NodeKind::TextChunk)
        .map(|(v, _)| v)
        .collect();
    assert_eq!(chunks.len(), 2);
}
