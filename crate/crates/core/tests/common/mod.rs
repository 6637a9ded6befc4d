#![allow(dead_code)]

use std::collections::BTreeMap;

use motiffed::graph::{AgentDataset, FederationData, Graph};
use motiffed::motif::MotifKey;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random simple graph: a random spanning tree plus `extra` random edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, n_labels: u32, class: usize) -> Graph {
    let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n_labels)).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    let mut tries = 0;
    while edges.len() < n - 1 + extra && tries < 100 {
        tries += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (lo, hi) = (a.min(b), a.max(b));
        if lo != hi && !edges.contains(&(lo, hi)) && !edges.contains(&(hi, lo)) {
            edges.push((lo, hi));
        }
    }
    Graph::new(labels, edges, None, class).unwrap()
}

/// Graph with a random edge label on every edge.
pub fn random_edge_labeled_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, n_labels: u32) -> Graph {
    let g = random_graph(rng, n, extra, n_labels, 0);
    let labels: Vec<Option<u32>> = g
        .edges()
        .iter()
        .map(|_| if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..2)) })
        .collect();
    Graph::new(g.node_labels().to_vec(), g.edges().to_vec(), Some(labels), 0).unwrap()
}

/// Same graph with node indices permuted.
pub fn relabel_nodes(g: &Graph, rng: &mut ChaCha8Rng) -> Graph {
    let n = g.node_count();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut labels = vec![0; n];
    for v in 0..n {
        labels[perm[v]] = g.node_labels()[v];
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let edge_labels = g.has_edge_labels().then(|| g.edge_labels().to_vec());
    Graph::new(labels, edges, edge_labels, g.class_label()).unwrap()
}

/// Hand-built federation: each agent gets `train` and `test` graphs from
/// the generator, the server `global` graphs.
pub fn federation(
    seed: u64,
    n_agents: usize,
    train: usize,
    test: usize,
    global: usize,
) -> FederationData {
    let mut r = rng(seed);
    let make = |k: usize, r: &mut ChaCha8Rng| -> Vec<Graph> {
        (0..k)
            .map(|i| {
                let n = r.gen_range(4..8);
                random_graph(r, n, 2, 2, i % 2)
            })
            .collect()
    };
    let agents = (0..n_agents)
        .map(|agent_id| AgentDataset {
            agent_id,
            train: make(train, &mut r),
            test: make(test, &mut r),
        })
        .collect();
    FederationData {
        global_test: make(global, &mut r),
        agents,
    }
}

fn connected_without(g: &Graph, skip: (usize, usize), from: usize, to: usize) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        for &(a, b) in g.edges() {
            if (a, b) == skip {
                continue;
            }
            let next = if a == v { b } else if b == v { a } else { continue };
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    seen[to]
}

/// Vertex sets whose induced subgraph is a single cycle, in walking order.
pub fn induced_cycles(g: &Graph, max_len: usize) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        if members.len() < 3 || members.len() > max_len {
            continue;
        }
        let nbrs = |v: usize| -> Vec<usize> { members.iter().copied().filter(|&u| g.has_edge(u, v)).collect() };
        if members.iter().any(|&v| nbrs(v).len() != 2) {
            continue;
        }
        let mut walk = vec![members[0]];
        let mut prev = None;
        loop {
            let cur = *walk.last().unwrap();
            let next = nbrs(cur).into_iter().find(|&u| Some(u) != prev).unwrap();
            if next == members[0] {
                break;
            }
            prev = Some(cur);
            walk.push(next);
        }
        // degree 2 everywhere and one walk covering all: a single cycle
        if walk.len() == members.len() {
            out.push(walk);
        }
    }
    out
}

pub fn brute_force_counts(g: &Graph, max_len: usize) -> BTreeMap<MotifKey, usize> {
    let labels = g.node_labels();
    let mut counts = BTreeMap::new();
    for &(a, b) in g.edges() {
        if !connected_without(g, (a, b), a, b) {
            *counts.entry(MotifKey::bond(labels[a], labels[b], g.edge_label(a, b))).or_insert(0) += 1;
        }
    }
    for cycle in induced_cycles(g, max_len) {
        let l = cycle.len();
        let nodes: Vec<u32> = cycle.iter().map(|&v| labels[v]).collect();
        let edges: Vec<Option<u32>> = (0..l).map(|j| g.edge_label(cycle[j], cycle[(j + 1) % l])).collect();
        *counts.entry(MotifKey::ring(&nodes, &edges)).or_insert(0) += 1;
    }
    counts
}

pub fn corpus(seed: u64, count: usize) -> Vec<Graph> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let n = r.gen_range(4..11);
            let extra = r.gen_range(0..6);
            if i % 3 == 0 {
                random_edge_labeled_graph(&mut r, n, extra, 3)
            } else {
                random_graph(&mut r, n, extra, 3, 0)
            }
        })
        .collect()
}

/// Per-motif TF-IDF averaged over every (shard, graph) occurrence, computed
/// from the brute-force counts.
pub fn direct_tfidf(shards: &[&[Graph]], max_len: usize) -> BTreeMap<MotifKey, f64> {
    let mut sums: BTreeMap<MotifKey, (f64, usize)> = BTreeMap::new();
    for shard in shards {
        let counts: Vec<_> = shard.iter().map(|g| brute_force_counts(g, max_len)).collect();
        for c in &counts {
            for (k, &occ) in c {
                let docs = counts.iter().filter(|o| o.contains_key(k)).count();
                let t = occ as f64 * ((1.0 + shard.len() as f64) / (1.0 + docs as f64)).ln() + 1.0;
                let e = sums.entry(k.clone()).or_insert((0.0, 0));
                e.0 += t;
                e.1 += 1;
            }
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
