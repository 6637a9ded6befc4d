//! Reference graph classifier with closed-form gradients.
//!
//! Embedding: `h_v = ReLU(W (x_v + sum_{u in N(v)} x_u))`, mean-pooled over
//! nodes. Decision layer: `scores = Phi e + b`. Node features are one-hot
//! node labels with the last slot acting as an overflow bucket.
//!
//! Flat parameter layout: `W` (d_hidden x d_in, row-major), then `Phi`
//! (C x d_hidden, row-major), then `b` (C).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::motif::MotifVocabulary;
use crate::rng::SimRng;
use crate::scalar::{dot, norm, Scalar};
use rand::SeedableRng;

pub const MAX_INPUT_DIM: usize = 32;
pub const DEFAULT_HIDDEN_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_in: usize,
    pub d_hidden: usize,
    pub n_classes: usize,
}

impl ModelShape {
    pub fn new(d_in: usize, d_hidden: usize, n_classes: usize) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "model shape needs d_in >= 1, d_hidden >= 1, classes >= 2 (got {d_in}, {d_hidden}, {n_classes})"
            )));
        }
        Ok(ModelShape { d_in, d_hidden, n_classes })
    }

    /// Total parameter count D.
    pub fn len(&self) -> usize {
        self.d_hidden * self.d_in + self.n_classes * self.d_hidden + self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn omega(&self, h: usize, j: usize) -> usize {
        h * self.d_in + j
    }

    #[inline]
    fn phi(&self, c: usize, h: usize) -> usize {
        self.d_hidden * self.d_in + c * self.d_hidden + h
    }

    #[inline]
    fn bias(&self, c: usize) -> usize {
        self.d_hidden * self.d_in + self.n_classes * self.d_hidden + c
    }
}

/// Maps node labels to one-hot slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureEncoder {
    d_in: usize,
}

impl FeatureEncoder {
    pub fn new(d_in: usize) -> Self {
        FeatureEncoder { d_in: d_in.max(1) }
    }

    /// One slot per observed label, capped at [`MAX_INPUT_DIM`].
    pub fn fit<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Self {
        let categories = graphs
            .into_iter()
            .flat_map(|g| g.node_labels().iter().copied())
            .max()
            .map_or(1, |m| m as usize + 1);
        FeatureEncoder::new(categories.min(MAX_INPUT_DIM))
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    #[inline]
    pub fn slot(&self, label: u32) -> usize {
        (label as usize).min(self.d_in - 1)
    }

    pub fn encode<T: Scalar>(&self, g: &Graph) -> Result<EncodedGraph<T>> {
        let n = g.node_count();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot embed a graph with no nodes".into()));
        }
        let d = self.d_in;
        let mut agg = vec![T::zero(); n * d];
        let labels = g.node_labels();
        for (v, &l) in labels.iter().enumerate() {
            agg[v * d + self.slot(l)] += T::one();
        }
        for &(a, b) in g.edges() {
            agg[a * d + self.slot(labels[b])] += T::one();
            agg[b * d + self.slot(labels[a])] += T::one();
        }
        Ok(EncodedGraph {
            n_nodes: n,
            d_in: d,
            agg,
            class_label: g.class_label(),
        })
    }

    pub fn encode_all<T: Scalar>(&self, graphs: &[Graph]) -> Result<Vec<EncodedGraph<T>>> {
        graphs.iter().map(|g| self.encode(g)).collect()
    }
}

/// Per-node aggregated inputs `x_v + sum_{u in N(v)} x_u`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph<T> {
    n_nodes: usize,
    d_in: usize,
    agg: Vec<T>,
    class_label: usize,
}

impl<T: Scalar> EncodedGraph<T> {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn class_label(&self) -> usize {
        self.class_label
    }

    pub fn with_class_label(mut self, class_label: usize) -> Self {
        self.class_label = class_label;
        self
    }

    fn row(&self, v: usize) -> &[T] {
        &self.agg[v * self.d_in..(v + 1) * self.d_in]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T> {
    shape: ModelShape,
    data: Vec<T>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(shape: ModelShape) -> Self {
        ParamVector {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)` for both weight matrices, zero bias.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut p = Self::zeros(shape);
        let a = 1.0 / (shape.d_in as f64).sqrt();
        for i in 0..shape.d_hidden * shape.d_in {
            p.data[i] = T::of(rng.gen_range(-a..a));
        }
        let a = 1.0 / (shape.d_hidden as f64).sqrt();
        for c in 0..shape.n_classes {
            for h in 0..shape.d_hidden {
                p.data[shape.phi(c, h)] = T::of(rng.gen_range(-a..a));
            }
        }
        p
    }

    pub fn unflatten(shape: ModelShape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                shape.len(),
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("parameter vector".into()));
        }
        Ok(ParamVector { shape, data })
    }

    pub fn flatten(&self) -> Vec<T> {
        self.data.clone()
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `self -= lr * grad`.
    pub fn descend(&mut self, grad: &GradientVector<T>, lr: T) {
        debug_assert_eq!(grad.len(), self.len());
        for (p, &g) in self.data.iter_mut().zip(grad.as_slice()) {
            *p -= lr * g;
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * T::WIDTH);
        for &x in &self.data {
            x.write_le(&mut out);
        }
        out
    }

    pub fn from_le_bytes(shape: ModelShape, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != shape.len() * T::WIDTH {
            return Err(Error::InvalidArgument(format!(
                "expected {} bytes of parameters, got {}",
                shape.len() * T::WIDTH,
                bytes.len()
            )));
        }
        Self::unflatten(shape, bytes.chunks_exact(T::WIDTH).map(T::read_le).collect())
    }
}

/// Same flat layout as [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradientVector<T>(Vec<T>);

impl<T: Scalar> GradientVector<T> {
    pub fn zeros(len: usize) -> Self {
        GradientVector(vec![T::zero(); len])
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        GradientVector(data)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|x| **x != T::zero()).count()
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: T, other: &GradientVector<T>) {
        for (x, &y) in self.0.iter_mut().zip(&other.0) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: T) {
        self.0.iter_mut().for_each(|x| *x *= a);
    }
}

/// Motif index -> embedding-space prototype.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrototypeMap<T>(BTreeMap<usize, Vec<T>>);

impl<T: Scalar> PrototypeMap<T> {
    pub fn new() -> Self {
        PrototypeMap(BTreeMap::new())
    }

    pub fn get(&self, k: usize) -> Option<&[T]> {
        self.0.get(&k).map(Vec::as_slice)
    }

    pub fn insert(&mut self, k: usize, v: Vec<T>) {
        self.0.insert(k, v);
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.contains_key(&k)
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.0.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

struct Forward<T> {
    /// n x d_hidden pre-activations
    pre: Vec<T>,
    embedding: Vec<T>,
}

fn forward<T: Scalar>(params: &ParamVector<T>, g: &EncodedGraph<T>) -> Forward<T> {
    let s = params.shape;
    let w = &params.data[..s.d_hidden * s.d_in];
    let mut pre = vec![T::zero(); g.n_nodes * s.d_hidden];
    let mut embedding = vec![T::zero(); s.d_hidden];
    for v in 0..g.n_nodes {
        let a = g.row(v);
        for h in 0..s.d_hidden {
            let z = dot(&w[h * s.d_in..(h + 1) * s.d_in], a);
            pre[v * s.d_hidden + h] = z;
            if z > T::zero() {
                embedding[h] += z;
            }
        }
    }
    let inv_n = T::one() / T::of_usize(g.n_nodes);
    embedding.iter_mut().for_each(|e| *e *= inv_n);
    Forward { pre, embedding }
}

/// Accumulates `d loss / d W` given `d loss / d embedding`.
fn backward_embedding<T: Scalar>(
    shape: ModelShape,
    g: &EncodedGraph<T>,
    fwd: &Forward<T>,
    d_embedding: &[T],
    grad: &mut [T],
) {
    let inv_n = T::one() / T::of_usize(g.n_nodes);
    for v in 0..g.n_nodes {
        let a = g.row(v);
        for h in 0..shape.d_hidden {
            if fwd.pre[v * shape.d_hidden + h] > T::zero() {
                let coeff = d_embedding[h] * inv_n;
                if coeff == T::zero() {
                    continue;
                }
                let row = &mut grad[shape.omega(h, 0)..shape.omega(h, 0) + shape.d_in];
                for (gw, &x) in row.iter_mut().zip(a) {
                    *gw += coeff * x;
                }
            }
        }
    }
}

fn class_scores<T: Scalar>(params: &ParamVector<T>, embedding: &[T]) -> Vec<T> {
    let s = params.shape;
    (0..s.n_classes)
        .map(|c| {
            let row = &params.data[s.phi(c, 0)..s.phi(c, 0) + s.d_hidden];
            dot(row, embedding) + params.data[s.bias(c)]
        })
        .collect()
}

pub fn embed_encoded<T: Scalar>(params: &ParamVector<T>, g: &EncodedGraph<T>) -> Vec<T> {
    forward(params, g).embedding
}

/// Embedding `f_omega(G)` of a raw graph.
pub fn embed<T: Scalar>(params: &ParamVector<T>, g: &Graph) -> Result<Vec<T>> {
    let encoded = FeatureEncoder::new(params.shape.d_in).encode(g)?;
    Ok(embed_encoded(params, &encoded))
}

/// Hidden pre-activations, row per node; lets callers keep finite-difference
/// probes away from ReLU kinks.
pub fn hidden_preactivations<T: Scalar>(params: &ParamVector<T>, g: &EncodedGraph<T>) -> Vec<T> {
    forward(params, g).pre
}

/// Supervised cross-entropy plus the prototype pull
/// `lambda * sum_k ||c_{i,k} - c_{N,k}||_2`, where `c_{i,k}` is recomputed from
/// the current parameters so its dependence on `W` is differentiated too.
#[derive(Clone, Copy)]
pub struct LocalObjective<'a, T> {
    pub data: &'a [EncodedGraph<T>],
    /// Per vocabulary index, indices into `data` containing that motif.
    pub membership: &'a [Vec<usize>],
    pub global_protos: &'a PrototypeMap<T>,
    pub lambda: T,
}

impl<'a, T: Scalar> LocalObjective<'a, T> {
    /// Supervised-only objective.
    pub fn supervised(data: &'a [EncodedGraph<T>], empty: &'a PrototypeMap<T>) -> Self {
        LocalObjective {
            data,
            membership: &[],
            global_protos: empty,
            lambda: T::zero(),
        }
    }

    pub fn loss(&self, params: &ParamVector<T>) -> Result<T> {
        self.evaluate(params, false).map(|(l, _)| l)
    }

    pub fn loss_and_grad(&self, params: &ParamVector<T>) -> Result<(T, GradientVector<T>)> {
        self.evaluate(params, true)
            .map(|(l, g)| (l, g.expect("gradient requested")))
    }

    fn evaluate(&self, params: &ParamVector<T>, want_grad: bool) -> Result<(T, Option<GradientVector<T>>)> {
        if self.data.is_empty() {
            return Err(Error::InvalidArgument("local objective over no graphs".into()));
        }
        if self.lambda < T::zero() {
            return Err(Error::InvalidArgument("lambda must be non-negative".into()));
        }
        let s = params.shape;
        let n = T::of_usize(self.data.len());
        let fwd: Vec<Forward<T>> = self.data.iter().map(|g| forward(params, g)).collect();

        let mut grad = vec![T::zero(); s.len()];
        let mut d_emb = vec![vec![T::zero(); s.d_hidden]; self.data.len()];
        let mut loss = T::zero();

        for (i, (g, f)) in self.data.iter().zip(&fwd).enumerate() {
            let scores = class_scores(params, &f.embedding);
            let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
            let sum_exp: T = scores.iter().map(|&z| (z - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            loss += (log_z - scores[g.class_label]) / n;
            if !want_grad {
                continue;
            }
            for c in 0..s.n_classes {
                let p = (scores[c] - log_z).exp();
                let d = (p - if c == g.class_label { T::one() } else { T::zero() }) / n;
                grad[s.bias(c)] += d;
                for h in 0..s.d_hidden {
                    grad[s.phi(c, h)] += d * f.embedding[h];
                    d_emb[i][h] += d * params.data[s.phi(c, h)];
                }
            }
        }

        if self.lambda > T::zero() {
            for (k, members) in self.membership.iter().enumerate() {
                let Some(target) = self.global_protos.get(k) else { continue };
                if members.is_empty() {
                    continue;
                }
                let m = T::of_usize(members.len());
                let mut diff = vec![T::zero(); s.d_hidden];
                for &gi in members {
                    for (d, &e) in diff.iter_mut().zip(&fwd[gi].embedding) {
                        *d += e / m;
                    }
                }
                for (d, &t) in diff.iter_mut().zip(target) {
                    *d -= t;
                }
                let dist = norm(&diff);
                loss += self.lambda * dist;
                // subgradient 0 at the cusp
                if want_grad && dist > T::zero() {
                    let coeff = self.lambda / (dist * m);
                    for &gi in members {
                        for (de, &d) in d_emb[gi].iter_mut().zip(&diff) {
                            *de += coeff * d;
                        }
                    }
                }
            }
        }

        if !loss.is_finite() {
            return Err(Error::Numeric("local loss".into()));
        }
        if !want_grad {
            return Ok((loss, None));
        }
        for ((g, f), de) in self.data.iter().zip(&fwd).zip(&d_emb) {
            backward_embedding(s, g, f, de, &mut grad);
        }
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("local gradient".into()));
        }
        Ok((loss, Some(GradientVector(grad))))
    }
}

/// Raw-graph convenience wrapper around [`LocalObjective::loss_and_grad`];
/// `data` must be the agent's training graphs the vocabulary indexes.
pub fn loss_and_grad<T: Scalar>(
    params: &ParamVector<T>,
    data: &[Graph],
    global_protos: &PrototypeMap<T>,
    vocab: &MotifVocabulary,
    agent_id: usize,
    lambda: T,
) -> Result<(T, GradientVector<T>)> {
    let encoded = FeatureEncoder::new(params.shape.d_in).encode_all(data)?;
    LocalObjective {
        data: &encoded,
        membership: vocab.membership(agent_id),
        global_protos,
        lambda,
    }
    .loss_and_grad(params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalTrainOutcome<T> {
    pub params: ParamVector<T>,
    /// Sum of the per-epoch gradients, i.e. `(before - after) / lr`.
    pub upload: GradientVector<T>,
    /// Objective at the parameters training started from.
    pub initial_loss: T,
}

/// Full-batch gradient descent for `epochs` steps.
pub fn local_train<T: Scalar>(
    params: &ParamVector<T>,
    objective: &LocalObjective<'_, T>,
    epochs: usize,
    lr: T,
) -> Result<LocalTrainOutcome<T>> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(lr > T::zero()) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let mut current = params.clone();
    let mut upload = GradientVector::zeros(params.len());
    let mut initial_loss = None;
    for _ in 0..epochs {
        let (loss, grad) = objective.loss_and_grad(&current)?;
        initial_loss.get_or_insert(loss);
        current.descend(&grad, lr);
        if epochs == 1 {
            upload = grad;
        } else {
            upload.add_scaled(T::one(), &grad);
        }
    }
    Ok(LocalTrainOutcome {
        params: current,
        upload,
        initial_loss: initial_loss.expect("at least one epoch"),
    })
}

/// `c_{i,k}`: mean embedding of the graphs containing motif `k`, for each
/// motif with at least one member.
pub fn local_prototypes<T: Scalar>(
    params: &ParamVector<T>,
    data: &[EncodedGraph<T>],
    membership: &[Vec<usize>],
) -> PrototypeMap<T> {
    let embeddings: Vec<Vec<T>> = data.iter().map(|g| embed_encoded(params, g)).collect();
    let mut protos = PrototypeMap::new();
    for (k, members) in membership.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let m = T::of_usize(members.len());
        let mut c = vec![T::zero(); params.shape.d_hidden];
        for &gi in members {
            for (x, &e) in c.iter_mut().zip(&embeddings[gi]) {
                *x += e / m;
            }
        }
        protos.insert(k, c);
    }
    protos
}

/// Predicted class: argmax of the scores, lowest index on ties.
pub fn predict<T: Scalar>(params: &ParamVector<T>, g: &EncodedGraph<T>) -> usize {
    let scores = class_scores(params, &embed_encoded(params, g));
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

pub fn evaluate<T: Scalar>(params: &ParamVector<T>, data: &[EncodedGraph<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on no graphs".into()));
    }
    let hits = data.iter().filter(|g| predict(params, g) == g.class_label).count();
    Ok(hits as f64 / data.len() as f64)
}
