//! Correlation statistics, fairness measures and payoff baselines.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundReport;
use crate::model::GradientVector;
use crate::rng::{rng_for, tag};
use crate::scalar::Scalar;
use crate::valuation::{approx_shapley, exact_shapley};

/// Largest federation for which the volume-game Shapley value is enumerated.
pub const MAX_VOLUME_SHAPLEY_AGENTS: usize = 20;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "sequences differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("correlation input is not finite".into()));
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Correlation between what agents reach alone and what they reach in the
/// federation.
pub fn gradient_fairness(selftrain_acc: &[f64], federated_acc: &[f64]) -> Result<f64> {
    if selftrain_acc.len() < 3 {
        return Err(Error::InvalidArgument("gradient fairness needs at least three agents".into()));
    }
    pearson(selftrain_acc, federated_acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Bucket {
    Low,
    Med,
    High,
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bucket::Low => "LOW",
            Bucket::Med => "MED",
            Bucket::High => "HIGH",
        })
    }
}

/// Mean payoff per agent and round for one stream, indexed by agent.
pub fn mean_payoffs<T: Scalar>(reports: &[RoundReport<T>]) -> Result<Vec<f64>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rounds to average".into()))?;
    let mut sums = vec![0.0; first.agents.len()];
    for report in reports {
        if report.agents.len() != sums.len() {
            return Err(Error::InvalidArgument("agent count changes between rounds".into()));
        }
        for (s, a) in sums.iter_mut().zip(&report.agents) {
            *s += a
                .payoff
                .ok_or_else(|| Error::InvalidArgument("reports carry no payoffs".into()))?
                .as_f64();
        }
    }
    Ok(sums.into_iter().map(|s| s / reports.len() as f64).collect())
}

/// Mean per-round payoff of one bucket's agents, averaged over seeds.
pub fn bucket_payoff<T: Scalar>(streams: &[&[RoundReport<T>]], buckets: &[Bucket], which: Bucket) -> Result<f64> {
    let members: Vec<usize> = (0..buckets.len()).filter(|&i| buckets[i] == which).collect();
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!("bucket {which} has no agents")));
    }
    if streams.is_empty() {
        return Err(Error::InvalidArgument("no result streams".into()));
    }
    let mut total = 0.0;
    for stream in streams {
        let means = mean_payoffs(stream)?;
        if means.len() != buckets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bucket assignments for {} agents",
                buckets.len(),
                means.len()
            )));
        }
        total += members.iter().map(|&i| means[i]).sum::<f64>() / members.len() as f64;
    }
    Ok(total / streams.len() as f64)
}

/// Mean per-round payoff of every populated bucket, averaged over seeds.
pub fn payoff_fairness<T: Scalar>(streams: &[&[RoundReport<T>]], buckets: &[Bucket]) -> Result<BTreeMap<Bucket, f64>> {
    let mut present: Vec<Bucket> = buckets.to_vec();
    present.sort();
    present.dedup();
    if present.is_empty() {
        return Err(Error::InvalidArgument("no bucket assignment".into()));
    }
    present
        .into_iter()
        .map(|b| Ok((b, bucket_payoff(streams, buckets, b)?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayoffScheme {
    Equal,
    Individual,
    Union,
    ShapleyVolume,
}

fn volume(total: f64) -> f64 {
    (1.0 + total).ln()
}

fn normalized(raw: Vec<f64>, budget: f64) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("baseline payoffs sum to zero".into()));
    }
    Ok(raw.into_iter().map(|x| x * budget / total).collect())
}

/// Data-volume payoff baselines, each summing to `budget`.
pub fn baseline_payoffs(scheme: PayoffScheme, sizes: &[usize], budget: f64) -> Result<Vec<f64>> {
    let sizes: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    volume_payoffs(scheme, &sizes, budget)
}

fn volume_payoffs(scheme: PayoffScheme, sizes: &[f64], budget: f64) -> Result<Vec<f64>> {
    let n = sizes.len();
    if n == 0 || sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("sizes must be nonempty and positive".into()));
    }
    let all: f64 = sizes.iter().sum();
    match scheme {
        PayoffScheme::Equal => Ok(vec![budget / n as f64; n]),
        PayoffScheme::Individual => normalized(sizes.iter().map(|&s| volume(s)).collect(), budget),
        PayoffScheme::Union => normalized(sizes.iter().map(|&s| volume(all) - volume(all - s)).collect(), budget),
        PayoffScheme::ShapleyVolume => {
            if n > MAX_VOLUME_SHAPLEY_AGENTS {
                return Err(Error::Capability(format!(
                    "volume Shapley enumerates 2^N coalitions; N = {n} exceeds {MAX_VOLUME_SHAPLEY_AGENTS}"
                )));
            }
            // weight of a coalition of size s not containing i: s!(n-s-1)!/n!
            let mut weight = vec![0.0; n];
            for (s, w) in weight.iter_mut().enumerate() {
                let mut v = 1.0 / n as f64;
                for k in 1..=s {
                    v *= k as f64 / (n - k) as f64;
                }
                *w = v;
            }
            let mut phi = vec![0.0; n];
            for mask in 0u32..(1u32 << n) {
                let total: f64 = (0..n).filter(|&j| mask >> j & 1 == 1).map(|j| sizes[j]).sum();
                let s = mask.count_ones() as usize;
                for (i, p) in phi.iter_mut().enumerate() {
                    if mask >> i & 1 == 0 {
                        *p += weight[s] * (volume(total + sizes[i]) - volume(total));
                    }
                }
            }
            normalized(phi, budget)
        }
    }
}

/// Agreement between the cosine approximation and the exact Shapley value
/// over random Gaussian gradient sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyCheck {
    pub n_agents: usize,
    pub dim: usize,
    pub trials: usize,
    /// Spearman correlation between approximate and exact values, per trial.
    pub spearman: Vec<f64>,
    pub mean_spearman: f64,
    /// Largest `|sum(phi) - 1|` over all trials.
    pub max_efficiency_error: f64,
}

/// Draws `trials` sets of `n` standard-normal gradients of length `dim`
/// (equal data sizes) and compares `approx_shapley` with `exact_shapley`.
pub fn verify_shapley(n: usize, dim: usize, trials: usize, seed: u64) -> Result<ShapleyCheck> {
    if n < 2 || dim == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "need at least two agents, a positive dimension and one trial".into(),
        ));
    }
    let sizes = vec![1; n];
    let mut spearmans = Vec::with_capacity(trials);
    let mut max_err: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = rng_for(seed, &[tag::SHAPLEY, trial as u64]);
        let grads: Vec<GradientVector<f64>> = (0..n)
            .map(|_| GradientVector::from_vec((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()))
            .collect();
        let exact = exact_shapley(&grads, &sizes)?;
        let mut global = GradientVector::zeros(dim);
        for g in &grads {
            global.add_scaled(1.0 / n as f64, g);
        }
        let approx = approx_shapley(&grads, &global)?;
        max_err = max_err.max((exact.iter().sum::<f64>() - 1.0).abs());
        spearmans.push(spearman(&approx, &exact)?);
    }
    Ok(ShapleyCheck {
        n_agents: n,
        dim,
        trials,
        mean_spearman: spearmans.iter().sum::<f64>() / trials as f64,
        spearman: spearmans,
        max_efficiency_error: max_err,
    })
}
