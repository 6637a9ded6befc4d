//! Agent valuation: the exact gradient-based Shapley value, its cosine
//! approximation, the moving-average value update and the leave-one-out
//! contribution diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{FederationConfig, RoundReport, Simulation};
use crate::graph::FederationData;
use crate::model::GradientVector;
use crate::scalar::{cosine, Scalar};

pub const MAX_EXACT_AGENTS: usize = 10;

/// Size-weighted mean of the member gradients.
fn coalition_gradient<T: Scalar>(grads: &[GradientVector<T>], sizes: &[usize], members: u32) -> Vec<T> {
    let total: usize = (0..grads.len())
        .filter(|i| members >> i & 1 == 1)
        .map(|i| sizes[i])
        .sum();
    let total = T::of_usize(total);
    let mut out = vec![T::zero(); grads[0].len()];
    for (i, g) in grads.iter().enumerate() {
        if members >> i & 1 == 1 {
            let w = T::of_usize(sizes[i]) / total;
            for (o, &x) in out.iter_mut().zip(g.as_slice()) {
                *o += w * x;
            }
        }
    }
    out
}

/// Exact gradient-based Shapley values with `v(S) = cos(u_S, u_N)`,
/// `u_S` the size-weighted mean of the members' gradients and `v(empty) = 0`.
///
/// Computed through the coalition form
/// `phi_i = sum_{S not containing i} |S|! (n - |S| - 1)! / n! * (v(S + i) - v(S))`,
/// which equals the average over all `n!` orderings.
pub fn exact_shapley<T: Scalar>(grads: &[GradientVector<T>], sizes: &[usize]) -> Result<Vec<T>> {
    let n = grads.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no agents".into()));
    }
    if n > MAX_EXACT_AGENTS {
        return Err(Error::Capability(format!(
            "exact Shapley enumeration supports at most {MAX_EXACT_AGENTS} agents, got {n}"
        )));
    }
    if sizes.len() != n || sizes.contains(&0) {
        return Err(Error::InvalidArgument("need one positive size per agent".into()));
    }
    if grads.iter().any(|g| g.len() != grads[0].len()) {
        return Err(Error::InvalidArgument("gradients differ in length".into()));
    }

    let full: u32 = (1u32 << n) - 1;
    let grand = coalition_gradient(grads, sizes, full);
    let mut value = vec![T::zero(); 1 << n];
    for mask in 1..=full {
        let u = coalition_gradient(grads, sizes, mask);
        value[mask as usize] = cosine(&u, &grand).ok_or_else(|| {
            Error::Degenerate(format!("coalition {mask:#b} has a zero gradient"))
        })?;
    }

    // weight[s] = s! (n - s - 1)! / n!
    let fact = |k: usize| (1..=k).fold(1.0f64, |acc, x| acc * x as f64);
    let weight: Vec<T> = (0..n)
        .map(|s| T::of(fact(s) * fact(n - s - 1) / fact(n)))
        .collect();

    Ok((0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..=full)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[(m | bit) as usize] - value[m as usize]))
                .sum()
        })
        .collect())
}

/// `zeta_i = cos(u_i, u_N)`, with 0 for a zero-norm upload.
pub fn approx_shapley<T: Scalar>(grads: &[GradientVector<T>], global: &GradientVector<T>) -> Result<Vec<T>> {
    if global.norm() == T::zero() {
        return Err(Error::Degenerate("global gradient has zero norm".into()));
    }
    Ok(grads
        .iter()
        .map(|g| cosine(g.as_slice(), global.as_slice()).unwrap_or_else(T::zero))
        .collect())
}

/// Per-agent values `r_i^t` with their full history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueState<T> {
    pub values: Vec<T>,
    /// `history[i]` = `r_i^1, ..., r_i^round`.
    pub history: Vec<Vec<T>>,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueUpdate<T> {
    pub state: ValueState<T>,
    /// The raw values summed to (almost) nothing; values were reset to `1/N`.
    pub reset: bool,
}

impl<T: Scalar> ValueState<T> {
    /// `r_i^0 = 1/N`.
    pub fn uniform(n: usize) -> Self {
        ValueState {
            values: vec![T::one() / T::of_usize(n); n],
            history: vec![Vec::new(); n],
            round: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.values.len()
    }

    /// Advances the round keeping the current values, for rounds without uploads.
    pub fn carry_forward(&self) -> ValueState<T> {
        let mut next = self.clone();
        for (h, &v) in next.history.iter_mut().zip(&self.values) {
            h.push(v);
        }
        next.round += 1;
        next
    }

    /// Values of rounds `1..round` (all but the latest), per agent.
    pub fn previous(&self) -> Vec<&[T]> {
        self.history
            .iter()
            .map(|h| &h[..h.len().saturating_sub(1)])
            .collect()
    }
}

/// `raw_i = r_i^{t-1} + alpha1 (zeta_i + alpha2 d_i)`, then normalized to sum 1.
pub fn update_values<T: Scalar>(
    state: &ValueState<T>,
    zeta: &[T],
    diversity: &[T],
    alpha1: T,
    alpha2: T,
) -> Result<ValueUpdate<T>> {
    update_values_with_decay(state, zeta, diversity, alpha1, alpha2, None)
}

/// As [`update_values`], optionally scaling the diversity term by
/// `decay^(t - 1)` in round `t`.
pub fn update_values_with_decay<T: Scalar>(
    state: &ValueState<T>,
    zeta: &[T],
    diversity: &[T],
    alpha1: T,
    alpha2: T,
    decay: Option<T>,
) -> Result<ValueUpdate<T>> {
    let n = state.n_agents();
    if zeta.len() != n || diversity.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} alignment and diversity entries, got {} and {}",
            zeta.len(),
            diversity.len()
        )));
    }
    if alpha1 < T::zero() || alpha2 < T::zero() {
        return Err(Error::InvalidArgument("alpha1 and alpha2 must be non-negative".into()));
    }
    let round = state.round + 1;
    let diversity_weight = match decay {
        Some(g) => alpha2 * g.powi(round as i32 - 1),
        None => alpha2,
    };
    let raw: Vec<T> = state
        .values
        .iter()
        .zip(zeta.iter().zip(diversity))
        .map(|(&r, (&z, &d))| r + alpha1 * (z + diversity_weight * d))
        .collect();
    let total: T = raw.iter().copied().sum();
    let reset = !(total > T::of(1e-12));
    let values = if reset {
        vec![T::one() / T::of_usize(n); n]
    } else {
        raw.iter().map(|&x| x / total).collect()
    };
    let mut history = state.history.clone();
    for (h, &v) in history.iter_mut().zip(&values) {
        h.push(v);
    }
    Ok(ValueUpdate {
        state: ValueState { values, history, round },
        reset,
    })
}

/// Relative global-accuracy gain attributable to one agent, per round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    pub contributions: Vec<f64>,
    /// Rounds where the excluded run scored 0 and the plain difference was reported.
    pub absolute: Vec<bool>,
}

/// Runs the federation with and without `excluded` under identical seeds and
/// reports `(acc_all - acc_without) / acc_without` on the global test set.
pub fn leave_one_out<T: Scalar>(
    data: &FederationData,
    config: &FederationConfig<T>,
    seed: u64,
    excluded: usize,
    rounds: usize,
) -> Result<LeaveOneOut> {
    let reduced = data.without_agent(excluded)?;
    if rounds == 0 {
        return Ok(LeaveOneOut {
            contributions: Vec::new(),
            absolute: Vec::new(),
        });
    }
    let with = Simulation::new(data, config.clone(), seed)?.run(rounds)?;
    let without = Simulation::new(&reduced, config.clone(), seed)?.run(rounds)?;
    Ok(loo_contributions(&with, &without))
}

/// Per-round relative global-accuracy gain of `with` over `without`.
pub fn loo_contributions<T: Scalar>(with: &[RoundReport<T>], without: &[RoundReport<T>]) -> LeaveOneOut {
    let mut out = LeaveOneOut {
        contributions: Vec::with_capacity(with.len()),
        absolute: Vec::with_capacity(with.len()),
    };
    for (a, b) in with.iter().zip(without) {
        let (all, rest) = (a.global_accuracy, b.global_accuracy);
        if rest == 0.0 {
            out.contributions.push(all - rest);
            out.absolute.push(true);
        } else {
            out.contributions.push((all - rest) / rest);
            out.absolute.push(false);
        }
    }
    out
}
