//! Bond and ring motifs, the TF-IDF motif vocabulary and graph diversity.
//!
//! A bond is a bridge edge keyed by its sorted endpoint labels and edge
//! label. A ring is a chordless cycle keyed by the lexicographically smallest
//! rotation/reflection of its node-label and edge-label sequences.

pub mod cycles;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Label};

pub use vocab::{build_vocabulary, build_vocabulary_from_shards, graph_diversity, MotifVocabulary, VocabularyExport};

pub const DEFAULT_MAX_RING_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MotifKey {
    Bond {
        /// Endpoint labels, smaller first.
        nodes: (Label, Label),
        edge: Option<Label>,
    },
    Ring {
        nodes: Vec<Label>,
        edges: Vec<Option<Label>>,
    },
}

impl MotifKey {
    pub fn bond(a: Label, b: Label, edge: Option<Label>) -> Self {
        MotifKey::Bond {
            nodes: (a.min(b), a.max(b)),
            edge,
        }
    }

    /// Canonical ring key. `edges[j]` joins `nodes[j]` and `nodes[j + 1]`
    /// (wrapping).
    pub fn ring(nodes: &[Label], edges: &[Option<Label>]) -> Self {
        assert_eq!(nodes.len(), edges.len(), "a cycle has as many edges as nodes");
        let len = nodes.len();
        let mut best: Option<(Vec<Label>, Vec<Option<Label>>)> = None;
        let mut consider = |cand: (Vec<Label>, Vec<Option<Label>>)| {
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        };
        for r in 0..len {
            consider((
                (0..len).map(|j| nodes[(r + j) % len]).collect(),
                (0..len).map(|j| edges[(r + j) % len]).collect(),
            ));
            // walk backwards from r: edge between r-j and r-j-1 is edges[r-j-1]
            consider((
                (0..len).map(|j| nodes[(r + len - j) % len]).collect(),
                (0..len).map(|j| edges[(r + 2 * len - j - 1) % len]).collect(),
            ));
        }
        let (nodes, edges) = best.unwrap_or_default();
        MotifKey::Ring { nodes, edges }
    }

    pub fn is_ring(&self) -> bool {
        matches!(self, MotifKey::Ring { .. })
    }

    /// Byte encoding whose lexicographic order defines vocabulary order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        fn edge(out: &mut Vec<u8>, e: Option<Label>) {
            let v = e.map_or(0u64, |l| u64::from(l) + 1);
            out.extend_from_slice(&v.to_be_bytes());
        }
        let mut out = Vec::new();
        match self {
            MotifKey::Bond { nodes, edge: e } => {
                out.push(0);
                out.extend_from_slice(&nodes.0.to_be_bytes());
                out.extend_from_slice(&nodes.1.to_be_bytes());
                edge(&mut out, *e);
            }
            MotifKey::Ring { nodes, edges } => {
                out.push(1);
                out.extend_from_slice(&(nodes.len() as u32).to_be_bytes());
                for n in nodes {
                    out.extend_from_slice(&n.to_be_bytes());
                }
                for &e in edges {
                    edge(&mut out, e);
                }
            }
        }
        out
    }
}

impl fmt::Display for MotifKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edge = |e: &Option<Label>| e.map_or_else(|| "_".to_string(), |l| l.to_string());
        match self {
            MotifKey::Bond { nodes, edge: e } => write!(f, "BOND({}-{}|{})", nodes.0, nodes.1, edge(e)),
            MotifKey::Ring { nodes, edges } => {
                let n: Vec<String> = nodes.iter().map(ToString::to_string).collect();
                let e: Vec<String> = edges.iter().map(edge).collect();
                write!(f, "RING({}|{})", n.join("."), e.join("."))
            }
        }
    }
}

/// Occurrence count of every motif in `g`: one per bridge edge for bonds,
/// one per distinct chordless-cycle vertex set for rings.
pub fn motif_counts(g: &Graph, max_ring_len: usize) -> BTreeMap<MotifKey, usize> {
    let adj = g.adjacency();
    let labels = g.node_labels();
    let mut counts = BTreeMap::new();
    for (a, b) in cycles::bridges(&adj) {
        *counts
            .entry(MotifKey::bond(labels[a], labels[b], g.edge_label(a, b)))
            .or_insert(0) += 1;
    }
    for cycle in cycles::chordless_cycles(&adj, max_ring_len) {
        let len = cycle.len();
        let nodes: Vec<Label> = cycle.iter().map(|&v| labels[v]).collect();
        let edges: Vec<Option<Label>> = (0..len)
            .map(|j| g.edge_label(cycle[j], cycle[(j + 1) % len]))
            .collect();
        *counts.entry(MotifKey::ring(&nodes, &edges)).or_insert(0) += 1;
    }
    counts
}

pub fn extract_motifs(g: &Graph, max_ring_len: usize) -> BTreeSet<MotifKey> {
    motif_counts(g, max_ring_len).into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(labels: Vec<Label>, edges: Vec<(usize, usize)>) -> Graph {
        Graph::new(labels, edges, None, 0).unwrap()
    }

    #[test]
    fn path_has_only_bonds() {
        let path = g(vec![0, 1, 2], vec![(0, 1), (1, 2)]);
        assert_eq!(
            extract_motifs(&path, 8),
            BTreeSet::from([MotifKey::bond(0, 1, None), MotifKey::bond(1, 2, None)])
        );
    }

    #[test]
    fn triangle_is_one_ring() {
        let tri = g(vec![0, 0, 0], vec![(0, 1), (1, 2), (0, 2)]);
        assert_eq!(
            extract_motifs(&tri, 8),
            BTreeSet::from([MotifKey::Ring {
                nodes: vec![0, 0, 0],
                edges: vec![None, None, None]
            }])
        );
    }

    #[test]
    fn triangle_with_pendant() {
        let tp = g(vec![0, 0, 0, 1], vec![(0, 1), (1, 2), (0, 2), (2, 3)]);
        let m = motif_counts(&tp, 8);
        assert_eq!(m.len(), 2);
        assert_eq!(m[&MotifKey::bond(0, 1, None)], 1);
        assert_eq!(
            m[&MotifKey::Ring {
                nodes: vec![0, 0, 0],
                edges: vec![None, None, None]
            }],
            1
        );
    }

    #[test]
    fn ring_orientation_example() {
        // nodes 2,0,1 with edge labels a=(2,0)->5, (0,1)->3, (1,2)->4
        let key = MotifKey::ring(&[2, 0, 1], &[Some(5), Some(3), Some(4)]);
        // minimal rotation starts at label 0; forward: 0,1,2 edges 3,4,5;
        // backward: 0,2,1 edges 5,4,3. Node sequences decide first.
        assert_eq!(
            key,
            MotifKey::Ring {
                nodes: vec![0, 1, 2],
                edges: vec![Some(3), Some(4), Some(5)]
            }
        );
    }

    #[test]
    fn reflection_tie_broken_by_edges() {
        // all node labels equal: edge sequence decides
        let key = MotifKey::ring(&[0, 0, 0, 0], &[Some(2), Some(1), Some(3), Some(1)]);
        assert_eq!(
            key,
            MotifKey::Ring {
                nodes: vec![0; 4],
                edges: vec![Some(1), Some(2), Some(1), Some(3)]
            }
        );
    }

    #[test]
    fn canonical_bytes_order_bonds_first() {
        let bond = MotifKey::bond(9, 9, Some(9));
        let ring = MotifKey::ring(&[0, 0, 0], &[None; 3]);
        assert!(bond.canonical_bytes() < ring.canonical_bytes());
        assert_eq!(bond.to_string(), "BOND(9-9|9)");
        assert_eq!(ring.to_string(), "RING(0.0.0|_._._)");
    }

    proptest! {
        #[test]
        fn ring_key_is_rotation_and_reflection_invariant(
            nodes in prop::collection::vec(0u32..3, 3..9),
            labels in prop::collection::vec(prop::option::of(0u32..2), 9),
            shift in 0usize..9,
        ) {
            let len = nodes.len();
            let edges = &labels[..len];
            let key = MotifKey::ring(&nodes, edges);
            let r = shift % len;
            let rot_n: Vec<_> = (0..len).map(|j| nodes[(r + j) % len]).collect();
            let rot_e: Vec<_> = (0..len).map(|j| edges[(r + j) % len]).collect();
            prop_assert_eq!(&MotifKey::ring(&rot_n, &rot_e), &key);
            let rev_n: Vec<_> = nodes.iter().rev().copied().collect();
            // reversed walk v_{L-1}, ..., v_0: edge j joins rev[j], rev[j+1] = edges[L-2-j], wrap = edges[L-1]
            let rev_e: Vec<_> = (0..len).map(|j| edges[(2 * len - 2 - j) % len]).collect();
            prop_assert_eq!(&MotifKey::ring(&rev_n, &rev_e), &key);
        }

        #[test]
        fn bonds_never_lie_on_rings(n in 3usize..10, mask in any::<u64>()) {
            let mut edges = Vec::new();
            let mut bit = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if mask >> (bit % 64) & 1 == 1 { edges.push((a, b)); }
                    bit += 1;
                }
            }
            let graph = g((0..n as u32).collect(), edges);
            let adj = graph.adjacency();
            let ring_edges: BTreeSet<(usize, usize)> = cycles::chordless_cycles(&adj, 8)
                .iter()
                .flat_map(|c| (0..c.len()).map(move |j| {
                    let (a, b) = (c[j], c[(j + 1) % c.len()]);
                    (a.min(b), a.max(b))
                }))
                .collect();
            for b in cycles::bridges(&adj) {
                prop_assert!(!ring_edges.contains(&b));
            }
        }
    }
}
