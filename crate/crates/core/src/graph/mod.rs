//! Graph data model, dataset loading, partitioning and structural perturbation.

mod io;
mod partition;
mod perturb;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, save_jsonl, DatasetFormat};
pub use partition::{partition, partition_indices, PartitionIndices, PartitionMode, PartitionSpec};
pub use perturb::perturb_edges;

pub type Label = u32;

/// An undirected labeled graph with a class label.
///
/// Edges are stored as `(u, v)` with `u < v`, sorted, without duplicates.
/// `edge_labels[e]` belongs to `edges[e]`; `None` is the NONE category.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    node_labels: Vec<Label>,
    edges: Vec<(usize, usize)>,
    edge_labels: Vec<Option<Label>>,
    class_label: usize,
}

impl Graph {
    /// Builds a graph from raw edges. Edge orientation is normalized;
    /// self-loops, out-of-range endpoints and duplicate pairs are rejected.
    pub fn new(
        node_labels: Vec<Label>,
        edges: Vec<(usize, usize)>,
        edge_labels: Option<Vec<Option<Label>>>,
        class_label: usize,
    ) -> Result<Self> {
        let n = node_labels.len();
        if let Some(labels) = &edge_labels {
            if labels.len() != edges.len() {
                return Err(Error::Structure(format!(
                    "{} edge labels for {} edges",
                    labels.len(),
                    edges.len()
                )));
            }
        }
        let mut keyed: BTreeMap<(usize, usize), Option<Label>> = BTreeMap::new();
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Structure(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::Structure(format!("self-loop on node {a}")));
            }
            let key = (a.min(b), a.max(b));
            let label = edge_labels.as_ref().and_then(|l| l[i]);
            if keyed.insert(key, label).is_some() {
                return Err(Error::Structure(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
        }
        let (edges, edge_labels) = keyed.into_iter().unzip();
        Ok(Graph {
            node_labels,
            edges,
            edge_labels,
            class_label,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_labels(&self) -> &[Label] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_labels(&self) -> &[Option<Label>] {
        &self.edge_labels
    }

    pub fn class_label(&self) -> usize {
        self.class_label
    }

    pub fn with_class_label(mut self, class_label: usize) -> Self {
        self.class_label = class_label;
        self
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    /// Position of the edge `{a, b}` in [`Graph::edges`].
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).ok()
    }

    pub fn edge_label(&self, a: usize, b: usize) -> Option<Label> {
        self.edge_index(a, b).and_then(|i| self.edge_labels[i])
    }

    pub fn has_edge_labels(&self) -> bool {
        self.edge_labels.iter().any(Option::is_some)
    }
}

/// One agent's local data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDataset {
    pub agent_id: usize,
    pub train: Vec<Graph>,
    pub test: Vec<Graph>,
}

/// Agent shards plus the server's held-out global test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationData {
    pub agents: Vec<AgentDataset>,
    pub global_test: Vec<Graph>,
}

impl FederationData {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn all_graphs(&self) -> impl Iterator<Item = &Graph> {
        self.agents
            .iter()
            .flat_map(|a| a.train.iter().chain(a.test.iter()))
            .chain(self.global_test.iter())
    }

    /// Number of classes, at least 2.
    pub fn n_classes(&self) -> usize {
        self.all_graphs()
            .map(|g| g.class_label + 1)
            .max()
            .unwrap_or(0)
            .max(2)
    }

    /// Copy without one agent; remaining agents are renumbered densely.
    pub fn without_agent(&self, excluded: usize) -> Result<FederationData> {
        if excluded >= self.agents.len() {
            return Err(Error::InvalidArgument(format!(
                "agent {excluded} out of range for {} agents",
                self.agents.len()
            )));
        }
        let agents = self
            .agents
            .iter()
            .filter(|a| a.agent_id != excluded)
            .enumerate()
            .map(|(i, a)| AgentDataset {
                agent_id: i,
                ..a.clone()
            })
            .collect();
        Ok(FederationData {
            agents,
            global_test: self.global_test.clone(),
        })
    }
}
