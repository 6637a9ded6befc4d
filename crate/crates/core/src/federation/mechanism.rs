//! Server-side reductions: value-weighted aggregation, sparsified gradient
//! allocation and payoff allocation.

use crate::error::{Error, Result};
use crate::model::{GradientVector, PrototypeMap};
use crate::scalar::Scalar;

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// `u_N = sum_i ReLU(r_i) u_i / sum_i ReLU(r_i)`.
pub fn aggregate_gradients<T: Scalar>(uploads: &[GradientVector<T>], values: &[T]) -> Result<GradientVector<T>> {
    let weights = aggregation_weights(values)
        .ok_or_else(|| Error::Degenerate("no agent has a positive value".into()))?;
    Ok(weighted_sum(uploads, &weights))
}

/// Normalized `ReLU(r_i)` weights, or `None` when every value is `<= 0`.
pub fn aggregation_weights<T: Scalar>(values: &[T]) -> Option<Vec<T>> {
    let total: T = values.iter().map(|&r| relu(r)).sum();
    if total > T::zero() {
        Some(values.iter().map(|&r| relu(r) / total).collect())
    } else {
        None
    }
}

pub(crate) fn weighted_sum<T: Scalar>(uploads: &[GradientVector<T>], weights: &[T]) -> GradientVector<T> {
    let len = uploads.first().map_or(0, GradientVector::len);
    let mut out = GradientVector::zeros(len);
    for (u, &w) in uploads.iter().zip(weights) {
        if w > T::zero() {
            out.add_scaled(w, u);
        }
    }
    out
}

/// `c_{N,k}` as the `ReLU(r_i)`-weighted mean over holders of `k`; motifs
/// whose holders all have non-positive value are left out.
pub fn aggregate_prototypes<T: Scalar>(protos: &[PrototypeMap<T>], values: &[T]) -> PrototypeMap<T> {
    let mut keys: Vec<usize> = protos.iter().flat_map(|p| p.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = PrototypeMap::new();
    for k in keys {
        let mut total = T::zero();
        let mut acc: Option<Vec<T>> = None;
        for (p, &r) in protos.iter().zip(values) {
            let w = relu(r);
            let Some(c) = p.get(k) else { continue };
            if w == T::zero() {
                continue;
            }
            total += w;
            let acc = acc.get_or_insert_with(|| vec![T::zero(); c.len()]);
            for (a, &x) in acc.iter_mut().zip(c) {
                *a += w * x;
            }
        }
        if let Some(mut acc) = acc {
            acc.iter_mut().for_each(|a| *a /= total);
            out.insert(k, acc);
        }
    }
    out
}

/// Size-weighted mean of local prototypes, used before any value exists.
pub fn size_weighted_prototypes<T: Scalar>(protos: &[PrototypeMap<T>], sizes: &[usize]) -> PrototypeMap<T> {
    let weights: Vec<T> = sizes.iter().map(|&s| T::of_usize(s)).collect();
    aggregate_prototypes(protos, &weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Allocation<T> {
    pub gradients: Vec<GradientVector<T>>,
    /// Components kept per agent, `n_i`.
    pub counts: Vec<usize>,
    /// No agent had a positive value; everyone received zeros.
    pub degenerate: bool,
}

/// Component order by decreasing magnitude, lower index first on ties.
fn magnitude_order<T: Scalar>(u: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| {
        u[b].abs()
            .partial_cmp(&u[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Keeps the `n` largest-magnitude components of `u`.
pub fn mask_top<T: Scalar>(u: &GradientVector<T>, n: usize) -> GradientVector<T> {
    mask_with_order(u, &magnitude_order(u.as_slice()), n)
}

fn mask_with_order<T: Scalar>(u: &GradientVector<T>, order: &[usize], n: usize) -> GradientVector<T> {
    let mut out = GradientVector::zeros(u.len());
    let src = u.as_slice();
    let dst = out.as_mut_slice();
    for &i in order.iter().take(n) {
        dst[i] = src[i];
    }
    out
}

/// Agent `i` with `r_i > 0` receives the top
/// `floor(D tanh(beta r_i) / max_j tanh(beta r_j))` components of `u_N`, the
/// max running over positive-value agents; others receive zeros.
pub fn allocate_gradient<T: Scalar>(u_n: &GradientVector<T>, values: &[T], beta: T) -> Result<Allocation<T>> {
    if !(beta >= T::one()) {
        return Err(Error::InvalidArgument(format!("beta must be at least 1, got {beta}")));
    }
    let d = u_n.len();
    let squash: Vec<Option<T>> = values
        .iter()
        .map(|&r| (r > T::zero()).then(|| (beta * r).tanh()))
        .collect();
    let top = squash.iter().flatten().copied().fold(T::zero(), T::max);
    if top == T::zero() {
        return Ok(Allocation {
            gradients: vec![GradientVector::zeros(d); values.len()],
            counts: vec![0; values.len()],
            degenerate: true,
        });
    }
    let order = magnitude_order(u_n.as_slice());
    let d_t = T::of_usize(d);
    let counts: Vec<usize> = squash
        .iter()
        .map(|s| match s {
            Some(s) => (d_t * (*s / top)).floor().to_usize().unwrap_or(0).min(d),
            None => 0,
        })
        .collect();
    Ok(Allocation {
        gradients: counts.iter().map(|&n| mask_with_order(u_n, &order, n)).collect(),
        counts,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PayoffOutcome<T> {
    pub payoffs: Vec<T>,
    /// Delayed-contribution compensation `mu_i`.
    pub compensation: Vec<T>,
    /// Raw payoffs summed to (almost) nothing; everyone got 0.
    pub degenerate: bool,
}

/// Payoffs for round `t`. `previous[i]` holds `r_i^1..r_i^{t-1}`.
///
/// `mu_i = max(r_i^t - mean(previous), 0)` (0 when `t = 1`); the raw payoff is
/// `r_i^t` when negative and `r_i^t + mu_i` otherwise; raw payoffs are scaled
/// to sum to `budget`.
pub fn allocate_payoff<T: Scalar>(values: &[T], previous: &[&[T]], budget: T, t: usize) -> Result<PayoffOutcome<T>> {
    if t == 0 {
        return Err(Error::InvalidArgument("payoff rounds start at 1".into()));
    }
    if previous.len() != values.len() {
        return Err(Error::InvalidArgument("one history per agent required".into()));
    }
    if let Some(h) = previous.iter().find(|h| h.len() != t - 1) {
        return Err(Error::InvalidArgument(format!(
            "round {t} needs {} previous values, got {}",
            t - 1,
            h.len()
        )));
    }
    let compensation: Vec<T> = values
        .iter()
        .zip(previous)
        .map(|(&r, h)| {
            if h.is_empty() {
                T::zero()
            } else {
                let mean = h.iter().copied().sum::<T>() / T::of_usize(h.len());
                (r - mean).max(T::zero())
            }
        })
        .collect();
    let raw: Vec<T> = values
        .iter()
        .zip(&compensation)
        .map(|(&r, &mu)| if r < T::zero() { r } else { r + mu })
        .collect();
    let total: T = raw.iter().copied().sum();
    if !(total > T::of(1e-12)) {
        return Ok(PayoffOutcome {
            payoffs: vec![T::zero(); values.len()],
            compensation,
            degenerate: true,
        });
    }
    Ok(PayoffOutcome {
        payoffs: raw.iter().map(|&x| x * budget / total).collect(),
        compensation,
        degenerate: false,
    })
}
