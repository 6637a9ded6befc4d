use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{motif_counts, MotifKey};
use crate::error::{Error, Result};
use crate::graph::{FederationData, Graph};

/// Retained motifs in canonical order, their TF-IDF scores, and which of
/// each agent's training graphs contain them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifVocabulary {
    keys: Vec<MotifKey>,
    tfidf: Vec<f64>,
    /// `membership[agent][k]` = ascending indices into that agent's training graphs.
    membership: Vec<Vec<Vec<usize>>>,
    max_ring_len: usize,
    beta_s: f64,
    candidates: usize,
}

pub fn build_vocabulary(data: &FederationData, max_ring_len: usize, beta_s: f64) -> Result<MotifVocabulary> {
    let shards: Vec<&[Graph]> = data.agents.iter().map(|a| a.train.as_slice()).collect();
    build_vocabulary_from_shards(&shards, max_ring_len, beta_s)
}

/// TF-IDF vocabulary over per-agent graph collections.
///
/// Per graph, `T_{k,G} = C(k)_G * ln((1 + |D_i|) / (1 + |D_{i,k}|)) + 1` with
/// agent-local document counts; `T_k` averages this over every graph (any
/// agent) containing `k`. Keys are ranked by `T_k` descending and the top
/// `ceil(beta_s * candidates)` are kept.
pub fn build_vocabulary_from_shards(shards: &[&[Graph]], max_ring_len: usize, beta_s: f64) -> Result<MotifVocabulary> {
    if shards.is_empty() || shards.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("cannot build a vocabulary from no graphs".into()));
    }
    if !(beta_s > 0.0 && beta_s <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta_s must lie in (0, 1], got {beta_s}")));
    }
    if max_ring_len < 3 {
        return Err(Error::InvalidArgument(format!("max_ring_len must be at least 3, got {max_ring_len}")));
    }

    let counts: Vec<Vec<BTreeMap<MotifKey, usize>>> = shards
        .iter()
        .map(|shard| shard.par_iter().map(|g| motif_counts(g, max_ring_len)).collect())
        .collect();

    // (sum of T_{k,G}, number of containing graphs)
    let mut score: BTreeMap<&MotifKey, (f64, usize)> = BTreeMap::new();
    for shard in &counts {
        let mut doc_freq: BTreeMap<&MotifKey, usize> = BTreeMap::new();
        for graph in shard {
            for key in graph.keys() {
                *doc_freq.entry(key).or_insert(0) += 1;
            }
        }
        let n_docs = shard.len() as f64;
        for graph in shard {
            for (key, &c) in graph {
                let idf = ((1.0 + n_docs) / (1.0 + doc_freq[key] as f64)).ln();
                let entry = score.entry(key).or_insert((0.0, 0));
                entry.0 += c as f64 * idf + 1.0;
                entry.1 += 1;
            }
        }
    }

    let mut ranked: Vec<(&MotifKey, f64, Vec<u8>)> = score
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64, k.canonical_bytes()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
    let candidates = ranked.len();
    // guard against 0.7 * 10 = 7.000000000000001
    let keep = ((beta_s * candidates as f64) - 1e-9).ceil().max(0.0) as usize;
    ranked.truncate(keep.min(candidates));
    ranked.sort_by(|a, b| a.2.cmp(&b.2));

    let keys: Vec<MotifKey> = ranked.iter().map(|r| r.0.clone()).collect();
    let tfidf = ranked.iter().map(|r| r.1).collect();
    let membership = counts
        .iter()
        .map(|shard| {
            keys.iter()
                .map(|k| {
                    shard
                        .iter()
                        .enumerate()
                        .filter(|(_, g)| g.contains_key(k))
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(MotifVocabulary {
        keys,
        tfidf,
        membership,
        max_ring_len,
        beta_s,
        candidates,
    })
}

impl MotifVocabulary {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[MotifKey] {
        &self.keys
    }

    pub fn tfidf(&self) -> &[f64] {
        &self.tfidf
    }

    pub fn index_of(&self, key: &MotifKey) -> Option<usize> {
        self.keys.binary_search_by(|k| k.canonical_bytes().cmp(&key.canonical_bytes())).ok()
    }

    pub fn n_agents(&self) -> usize {
        self.membership.len()
    }

    pub fn max_ring_len(&self) -> usize {
        self.max_ring_len
    }

    /// Number of distinct motifs seen before pruning.
    pub fn candidates(&self) -> usize {
        self.candidates
    }

    /// Per-motif graph indices for one agent.
    pub fn membership(&self, agent: usize) -> &[Vec<usize>] {
        &self.membership[agent]
    }

    /// Membership recomputed for an arbitrary graph collection.
    pub fn membership_of(&self, graphs: &[Graph]) -> Vec<Vec<usize>> {
        let counts: Vec<_> = graphs.par_iter().map(|g| motif_counts(g, self.max_ring_len)).collect();
        self.keys
            .iter()
            .map(|k| {
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.contains_key(k))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    /// Fraction of vocabulary motifs present in `graphs`.
    pub fn diversity_of(&self, graphs: &[Graph]) -> Result<f64> {
        diversity_from_membership(self.len(), &self.membership_of(graphs))
    }

    /// Restricts the vocabulary to the given agents, renumbered in order.
    pub fn select_agents(&self, agents: &[usize]) -> MotifVocabulary {
        MotifVocabulary {
            membership: agents.iter().map(|&a| self.membership[a].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn export(&self) -> VocabularyExport {
        VocabularyExport {
            max_ring_len: self.max_ring_len,
            beta_s: self.beta_s,
            candidates: self.candidates,
            motifs: self
                .keys
                .iter()
                .enumerate()
                .map(|(k, key)| ExportedMotif {
                    index: k,
                    label: key.to_string(),
                    key: key.clone(),
                    tfidf: self.tfidf[k],
                    agent_counts: self.membership.iter().map(|m| m[k].len()).collect(),
                })
                .collect(),
        }
    }
}

fn diversity_from_membership(k_total: usize, membership: &[Vec<usize>]) -> Result<f64> {
    if k_total == 0 {
        return Err(Error::Degenerate("motif vocabulary is empty".into()));
    }
    let present = membership.iter().filter(|m| !m.is_empty()).count();
    Ok(present as f64 / k_total as f64)
}

/// `d_i = k_i / K`.
pub fn graph_diversity(vocab: &MotifVocabulary, agent_id: usize) -> Result<f64> {
    if agent_id >= vocab.n_agents() {
        return Err(Error::InvalidArgument(format!(
            "agent {agent_id} out of range for {} agents",
            vocab.n_agents()
        )));
    }
    diversity_from_membership(vocab.len(), vocab.membership(agent_id))
}

/// JSON form written by `--dump-vocab`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabularyExport {
    pub max_ring_len: usize,
    pub beta_s: f64,
    pub candidates: usize,
    pub motifs: Vec<ExportedMotif>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedMotif {
    pub index: usize,
    pub label: String,
    #[serde(flatten)]
    pub key: MotifKey,
    pub tfidf: f64,
    pub agent_counts: Vec<usize>,
}
