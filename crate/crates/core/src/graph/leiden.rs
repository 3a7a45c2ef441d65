//! Leiden community detection maximizing modularity with a resolution parameter.
//!
//! Each pass runs fast local moving, refines every community by merging
//! well-connected singletons (randomized, temperature `theta`), and
//! aggregates the graph by the refined partition while the unrefined
//! partition seeds the next level. Passes repeat until the partition is
//! stable. Any community that ends up disconnected is split into its
//! components, which strictly increases modularity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{induced_components, Community, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeidenParams {
    pub resolution: f64,
    pub seed: u64,
    pub theta: f64,
    pub max_passes: usize,
    /// Independent runs from the same seeded stream; the best modularity wins.
    pub restarts: usize,
}

impl Default for LeidenParams {
    fn default() -> Self {
        LeidenParams {
            resolution: 1.0,
            seed: 0,
            theta: 0.01,
            max_passes: 10,
            restarts: 4,
        }
    }
}

/// Modularity of `membership` on a symmetric adjacency (each edge listed from both ends).
pub fn modularity(adj: &[Vec<(usize, f64)>], membership: &[usize], resolution: f64) -> f64 {
    let strength: Vec<f64> = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
    let two_m: f64 = strength.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut internal = 0.0;
    for (u, list) in adj.iter().enumerate() {
        for &(v, w) in list {
            if membership[u] == membership[v] {
                internal += w;
            }
        }
    }
    let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
    for (u, &s) in strength.iter().enumerate() {
        *totals.entry(membership[u]).or_default() += s;
    }
    let null: f64 = totals.values().map(|k| k * k).sum::<f64>() / two_m;
    (internal - resolution * null) / two_m
}

struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
}

impl Level {
    fn len(&self) -> usize {
        self.strength.len()
    }
}

/// Relabels communities 0.. in order of first appearance.
fn normalize(membership: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    membership
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn community_count(membership: &[usize]) -> usize {
    membership.iter().collect::<BTreeSet<_>>().len()
}

struct Context<'a> {
    gamma: f64,
    two_m: f64,
    theta: f64,
    rng: &'a mut ChaCha8Rng,
}

/// Queue-based local moving. Returns whether any node changed community.
fn move_nodes(level: &Level, partition: &mut [usize], ctx: &mut Context) -> bool {
    let n = level.len();
    let mut comm_strength = vec![0.0; n];
    let mut comm_size = vec![0usize; n];
    for v in 0..n {
        comm_strength[partition[v]] += level.strength[v];
        comm_size[partition[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| comm_size[c] == 0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(ctx.rng);
    let mut queue: VecDeque<usize> = order.into_iter().collect();
    let mut queued = vec![true; n];
    let mut neigh_w = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut changed = false;

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let cur = partition[v];
        let sv = level.strength[v];
        for &(u, w) in &level.adj[v] {
            let c = partition[u];
            if neigh_w[c] == 0.0 {
                touched.push(c);
            }
            neigh_w[c] += w;
        }
        comm_strength[cur] -= sv;
        comm_size[cur] -= 1;

        let gain = |c: usize, cs: &[f64], nw: &[f64]| nw[c] - ctx.gamma * sv * cs[c] / ctx.two_m;
        let mut best = cur;
        let mut best_gain = gain(cur, &comm_strength, &neigh_w);
        for &c in &touched {
            let g = gain(c, &comm_strength, &neigh_w);
            if g > best_gain {
                best = c;
                best_gain = g;
            }
        }
        if best_gain < 0.0 {
            // An empty community has gain exactly zero.
            best = if comm_size[cur] == 0 {
                cur
            } else {
                loop {
                    let c = empty.pop().expect("an empty community always exists");
                    if comm_size[c] == 0 {
                        break c;
                    }
                }
            };
        }

        partition[v] = best;
        comm_strength[best] += sv;
        comm_size[best] += 1;
        if best != cur {
            changed = true;
            if comm_size[cur] == 0 {
                empty.push(cur);
            }
            for &(u, _) in &level.adj[v] {
                if !queued[u] && partition[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        for c in touched.drain(..) {
            neigh_w[c] = 0.0;
        }
    }
    changed
}

/// Refines `partition`: inside each community, well-connected singletons
/// merge into well-connected refined communities chosen with probability
/// proportional to `exp(ΔQ / theta)`.
fn refine(level: &Level, partition: &[usize], ctx: &mut Context) -> Vec<usize> {
    let n = level.len();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_strength = level.strength.clone();
    let mut singleton = vec![true; n];
    let mut comm_strength = vec![0.0; n];
    for v in 0..n {
        comm_strength[partition[v]] += level.strength[v];
    }
    // Weight from each refined community to the rest of its parent community.
    let mut ext: Vec<f64> = (0..n)
        .map(|v| {
            level.adj[v]
                .iter()
                .filter(|&&(u, _)| partition[u] == partition[v])
                .map(|&(_, w)| w)
                .sum()
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(ctx.rng);
    let mut neigh_w = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    for v in order {
        if !singleton[v] {
            continue;
        }
        let parent = partition[v];
        let sv = level.strength[v];
        let ks = comm_strength[parent];
        if ext[v] < ctx.gamma * sv * (ks - sv) / ctx.two_m {
            continue;
        }
        for &(u, w) in &level.adj[v] {
            if partition[u] != parent {
                continue;
            }
            let r = refined[u];
            if neigh_w[r] == 0.0 {
                touched.push(r);
            }
            neigh_w[r] += w;
        }
        let mut candidates: Vec<(usize, f64)> = vec![(refined[v], 0.0)];
        for &r in &touched {
            if r == refined[v] {
                continue;
            }
            let kr = r_strength[r];
            if ext[r] < ctx.gamma * kr * (ks - kr) / ctx.two_m {
                continue;
            }
            let gain = neigh_w[r] - ctx.gamma * sv * kr / ctx.two_m;
            if gain >= 0.0 {
                candidates.push((r, 2.0 * gain / ctx.two_m));
            }
        }
        let max_q = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = candidates
            .iter()
            .map(|c| ((c.1 - max_q) / ctx.theta).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut pick = ctx.rng.gen::<f64>() * total;
        let mut chosen = candidates[0].0;
        for (c, w) in candidates.iter().zip(&weights) {
            if pick < *w {
                chosen = c.0;
                break;
            }
            pick -= w;
            chosen = c.0;
        }

        if chosen != refined[v] {
            ext[chosen] = ext[chosen] + ext[v] - 2.0 * neigh_w[chosen];
            r_strength[chosen] += sv;
            r_strength[v] = 0.0;
            refined[v] = chosen;
            singleton[v] = false;
            singleton[chosen] = false;
        }
        for r in touched.drain(..) {
            neigh_w[r] = 0.0;
        }
    }
    refined
}

/// Collapses each community of `membership` into one node. Internal weight
/// is dropped from the adjacency; node strengths carry it.
fn aggregate(level: &Level, membership: &[usize]) -> (Level, Vec<usize>) {
    let map = normalize(membership);
    let k = community_count(&map);
    let mut strength = vec![0.0; k];
    let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    for v in 0..level.len() {
        strength[map[v]] += level.strength[v];
        for &(u, w) in &level.adj[v] {
            if map[u] != map[v] {
                *acc[map[v]].entry(map[u]).or_insert(0.0) += w;
            }
        }
    }
    let adj = acc.into_iter().map(|m| m.into_iter().collect()).collect();
    (Level { adj, strength }, map)
}

fn leiden_pass(adj: &[Vec<(usize, f64)>], strength: &[f64], initial: &[usize], ctx: &mut Context) -> Vec<usize> {
    let mut level = Level {
        adj: adj
            .iter()
            .enumerate()
            .map(|(u, l)| l.iter().copied().filter(|&(v, _)| v != u).collect())
            .collect(),
        strength: strength.to_vec(),
    };
    let mut node_map: Vec<usize> = (0..adj.len()).collect();
    let mut partition = normalize(initial);

    loop {
        move_nodes(&level, &mut partition, ctx);
        if community_count(&partition) == level.len() {
            break;
        }
        let refined = refine(&level, &partition, ctx);
        let by = if community_count(&refined) == level.len() {
            partition.clone()
        } else {
            refined
        };
        let (next, map) = aggregate(&level, &by);
        let mut next_partition = vec![0; next.len()];
        for x in 0..level.len() {
            next_partition[map[x]] = partition[x];
        }
        for m in node_map.iter_mut() {
            *m = map[*m];
        }
        partition = normalize(&next_partition);
        level = next;
    }
    normalize(&node_map.iter().map(|&x| partition[x]).collect::<Vec<_>>())
}

/// Community label per node (labels 0.. by first appearance).
pub fn leiden(adj: &[Vec<(usize, f64)>], params: LeidenParams) -> Vec<usize> {
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let strength: Vec<f64> = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
    let two_m: f64 = strength.iter().sum();
    if two_m == 0.0 {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ctx = Context {
        gamma: params.resolution,
        two_m,
        theta: params.theta,
        rng: &mut rng,
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..params.restarts.max(1) {
        let mut membership: Vec<usize> = (0..n).collect();
        for _ in 0..params.max_passes.max(1) {
            let next = leiden_pass(adj, &strength, &membership, &mut ctx);
            if next == membership {
                break;
            }
            membership = next;
        }
        let membership = split_disconnected(adj, &membership);
        let q = modularity(adj, &membership, params.resolution);
        if best.as_ref().is_none_or(|b| q > b.0) {
            best = Some((q, membership));
        }
    }
    best.expect("at least one restart").1
}

fn split_disconnected(adj: &[Vec<(usize, f64)>], membership: &[usize]) -> Vec<usize> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &c) in membership.iter().enumerate() {
        groups.entry(c).or_default().push(v);
    }
    let mut out = vec![0; membership.len()];
    let mut label = 0;
    for members in groups.values() {
        for comp in induced_components(adj, members) {
            for v in comp {
                out[v] = label;
            }
            label += 1;
        }
    }
    normalize(&out)
}

pub fn leiden_partition(graph: &Graph, params: LeidenParams) -> Vec<Community> {
    let membership = leiden(&graph.adjacency_lists(), params);
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (v, &c) in membership.iter().enumerate() {
        groups.entry(c).or_default().insert(v);
    }
    groups
        .into_values()
        .enumerate()
        .map(|(id, members)| Community {
            id,
            members,
            summary_node: None,
        })
        .collect()
}
