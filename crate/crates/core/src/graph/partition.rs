use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AgentDataset, FederationData, Graph};
use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Shuffle, then deal round-robin.
    #[default]
    Iid,
    /// Shuffle, stable-sort by class, then cut contiguous shards.
    LabelSkew,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub n_agents: usize,
    pub global_test_frac: f64,
    pub local_test_frac: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: PartitionMode,
}

/// Graph indices assigned to each role.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionIndices {
    pub global_test: Vec<usize>,
    /// `(train, test)` per agent.
    pub agents: Vec<(Vec<usize>, Vec<usize>)>,
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {f}")))
    }
}

pub fn partition_indices(n_graphs: usize, classes: &[usize], spec: &PartitionSpec) -> Result<PartitionIndices> {
    if spec.n_agents < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 agents, got {}",
            spec.n_agents
        )));
    }
    check_fraction("global_test_frac", spec.global_test_frac)?;
    check_fraction("local_test_frac", spec.local_test_frac)?;

    let n_global = ((n_graphs as f64) * spec.global_test_frac).round().max(1.0) as usize;
    let remaining = n_graphs.saturating_sub(n_global);
    // smallest shard must hold 2 train + 1 test graph
    if n_global >= n_graphs || remaining / spec.n_agents < 3 {
        return Err(Error::Sizing(format!(
            "{n_graphs} graphs cannot give {} agents 2 train and 1 test graph each after reserving {n_global} for the server",
            spec.n_agents
        )));
    }

    let mut order: Vec<usize> = (0..n_graphs).collect();
    order.shuffle(&mut rng_for(spec.seed, &[tag::PARTITION]));
    let global_test = order[..n_global].to_vec();
    let mut rest = order[n_global..].to_vec();

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); spec.n_agents];
    match spec.mode {
        PartitionMode::Iid => {
            for (i, g) in rest.into_iter().enumerate() {
                shards[i % spec.n_agents].push(g);
            }
        }
        PartitionMode::LabelSkew => {
            rest.sort_by_key(|&g| classes[g]);
            let base = remaining / spec.n_agents;
            let extra = remaining % spec.n_agents;
            let mut it = rest.into_iter();
            for (a, shard) in shards.iter_mut().enumerate() {
                let take = base + usize::from(a < extra);
                shard.extend(it.by_ref().take(take));
            }
        }
    }

    let agents = shards
        .into_iter()
        .map(|shard| {
            let len = shard.len();
            let n_test = ((len as f64) * spec.local_test_frac).round() as usize;
            let n_test = n_test.clamp(1, len - 2);
            let n_train = len - n_test;
            let (train, test) = shard.split_at(n_train);
            (train.to_vec(), test.to_vec())
        })
        .collect();

    Ok(PartitionIndices { global_test, agents })
}

/// Splits graphs into a server test set and `n_agents` train/test shards.
pub fn partition(graphs: &[Graph], spec: &PartitionSpec) -> Result<FederationData> {
    let classes: Vec<usize> = graphs.iter().map(Graph::class_label).collect();
    let idx = partition_indices(graphs.len(), &classes, spec)?;
    let pick = |ids: &[usize]| ids.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    Ok(FederationData {
        global_test: pick(&idx.global_test),
        agents: idx
            .agents
            .iter()
            .enumerate()
            .map(|(agent_id, (train, test))| AgentDataset {
                agent_id,
                train: pick(train),
                test: pick(test),
            })
            .collect(),
    })
}
