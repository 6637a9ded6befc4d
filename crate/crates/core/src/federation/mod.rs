//! The server/agent communication loop.
//!
//! One round: aggregate last round's uploads with the previous values,
//! re-value agents from alignment and diversity, hand out sparsified
//! gradients, train locally against the global motif prototypes, refresh
//! the prototypes, and pay out the budget.

mod checkpoint;
mod mechanism;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FederationData;
use crate::model::{
    evaluate, local_prototypes, local_train, EncodedGraph, FeatureEncoder, GradientVector, LocalObjective,
    ModelShape, ParamVector, PrototypeMap, DEFAULT_HIDDEN_DIM,
};
use crate::motif::{build_vocabulary, graph_diversity, MotifVocabulary, DEFAULT_MAX_RING_LEN};
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;
use crate::valuation::{approx_shapley, update_values_with_decay, ValueState};

pub use checkpoint::{CheckpointManifest, CHECKPOINT_MANIFEST};
pub use mechanism::{
    aggregate_gradients, aggregate_prototypes, aggregation_weights, allocate_gradient, allocate_payoff, mask_top,
    size_weighted_prototypes, Allocation, PayoffOutcome,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct FederationConfig<T> {
    pub alpha1: T,
    pub alpha2: T,
    pub lambda: T,
    pub beta: T,
    pub budget: T,
    /// Local epochs per round, E.
    pub epochs: usize,
    pub lr: T,
    pub d_hidden: usize,
    pub max_ring_len: usize,
    pub beta_s: f64,
    /// Optional per-round decay of the diversity bonus; off by default.
    pub diversity_decay: Option<T>,
}

impl<T: Scalar> Default for FederationConfig<T> {
    fn default() -> Self {
        FederationConfig {
            alpha1: T::of(0.05),
            alpha2: T::one(),
            lambda: T::of(0.1),
            beta: T::one(),
            budget: T::one(),
            epochs: 1,
            lr: T::of(0.01),
            d_hidden: DEFAULT_HIDDEN_DIM,
            max_ring_len: DEFAULT_MAX_RING_LEN,
            beta_s: 0.9,
            diversity_decay: None,
        }
    }
}

impl<T: Scalar> FederationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.alpha1 < T::zero() || self.alpha2 < T::zero() {
            return bad("alpha1 and alpha2 must be non-negative");
        }
        if self.lambda < T::zero() {
            return bad("lambda must be non-negative");
        }
        if !(self.beta >= T::one()) {
            return bad("beta must be at least 1");
        }
        if !(self.budget > T::zero()) {
            return bad("budget must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > T::zero()) {
            return bad("lr must be positive");
        }
        if self.d_hidden == 0 {
            return bad("d_hidden must be positive");
        }
        if self.max_ring_len < 3 {
            return bad("max_ring_len must be at least 3");
        }
        if !(self.beta_s > 0.0 && self.beta_s <= 1.0) {
            return bad("beta_s must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AgentState<T> {
    pub agent_id: usize,
    pub train: Vec<EncodedGraph<T>>,
    pub test: Vec<EncodedGraph<T>>,
    /// Vocabulary index -> indices into `train`.
    pub membership: Vec<Vec<usize>>,
    pub params: ParamVector<T>,
    /// Upload produced by the latest local training, if any.
    pub last_upload: Option<GradientVector<T>>,
    pub prototypes: PrototypeMap<T>,
    pub payoff_total: T,
    pub diversity: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ServerState<T> {
    pub values: ValueState<T>,
    pub global_grad: GradientVector<T>,
    pub global_protos: PrototypeMap<T>,
    pub budget: T,
    pub round: usize,
}

/// How uploads relate to local training; recorded in every report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UploadConvention {
    /// `(params_before - params_after) / lr` over the local epochs.
    #[default]
    ParamDeltaOverLr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundFlags {
    /// Value normalization hit a non-positive sum; values reset to uniform.
    pub value_reset: bool,
    /// No agent had positive value at aggregation; uniform weights used.
    pub aggregation_fallback: bool,
    /// The aggregated gradient was zero, so alignment was set to 0.
    pub zero_global_gradient: bool,
    /// No agent had positive value at allocation.
    pub allocation_degenerate: bool,
    /// Raw payoffs summed to a non-positive total; nobody was paid.
    pub payoff_degenerate: bool,
}

impl RoundFlags {
    pub fn any(&self) -> bool {
        self.value_reset
            || self.aggregation_fallback
            || self.zero_global_gradient
            || self.allocation_degenerate
            || self.payoff_degenerate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgentRecord<T> {
    pub agent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<T>,
    /// Weight this agent's upload received in `u_N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation_weight: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocated_components: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation: Option<T>,
    pub train_loss: T,
    pub test_accuracy: f64,
    pub global_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RoundReport<T> {
    pub round: usize,
    pub agents: Vec<AgentRecord<T>>,
    /// Mean over agents of their model's accuracy on the server's test set.
    pub global_accuracy: f64,
    pub flags: RoundFlags,
    pub upload: UploadConvention,
}

impl<T: Scalar> RoundReport<T> {
    pub fn personalized_accuracy(&self) -> f64 {
        self.agents.iter().map(|a| a.test_accuracy).sum::<f64>() / self.agents.len() as f64
    }

    pub fn mean_train_loss(&self) -> f64 {
        self.agents.iter().map(|a| a.train_loss.as_f64()).sum::<f64>() / self.agents.len() as f64
    }
}

/// Read-only inputs shared by every round.
pub struct RoundContext<'a, T> {
    pub config: &'a FederationConfig<T>,
    pub global_test: &'a [EncodedGraph<T>],
}

struct LocalStep<T> {
    params: ParamVector<T>,
    upload: GradientVector<T>,
    loss: T,
    prototypes: PrototypeMap<T>,
    test_accuracy: f64,
    global_accuracy: f64,
}

fn train_agent<T: Scalar>(
    agent: &AgentState<T>,
    global_protos: &PrototypeMap<T>,
    ctx: &RoundContext<'_, T>,
    lambda: T,
) -> Result<LocalStep<T>> {
    let objective = LocalObjective {
        data: &agent.train,
        membership: &agent.membership,
        global_protos,
        lambda,
    };
    let out = local_train(&agent.params, &objective, ctx.config.epochs, ctx.config.lr)?;
    let prototypes = local_prototypes(&out.params, &agent.train, &agent.membership);
    let test_accuracy = evaluate(&out.params, &agent.test)?;
    let global_accuracy = if ctx.global_test.is_empty() {
        0.0
    } else {
        evaluate(&out.params, ctx.global_test)?
    };
    Ok(LocalStep {
        params: out.params,
        upload: out.upload,
        loss: out.initial_loss,
        prototypes,
        test_accuracy,
        global_accuracy,
    })
}

/// Executes one communication round in place and reports it.
///
/// The first round has no uploads yet: values carry over and training
/// starts directly.
pub fn run_round<T: Scalar>(
    server: &mut ServerState<T>,
    agents: &mut [AgentState<T>],
    ctx: &RoundContext<'_, T>,
) -> Result<RoundReport<T>> {
    let cfg = ctx.config;
    let n = agents.len();
    let t = server.round + 1;
    let mut flags = RoundFlags::default();
    let mut zeta = None;
    let mut weights = None;
    let mut counts = None;

    let uploads: Option<Vec<GradientVector<T>>> = agents.iter().map(|a| a.last_upload.clone()).collect();
    match uploads {
        Some(uploads) if t > 1 => {
            // (1) aggregate with the previous round's values
            let w = match aggregation_weights(&server.values.values) {
                Some(w) => w,
                None => {
                    flags.aggregation_fallback = true;
                    vec![T::one() / T::of_usize(n); n]
                }
            };
            let u_n = mechanism::weighted_sum(&uploads, &w);

            // (2) alignment against the fresh u_N, then the value update
            let z = match approx_shapley(&uploads, &u_n) {
                Ok(z) => z,
                Err(Error::Degenerate(_)) => {
                    flags.zero_global_gradient = true;
                    vec![T::zero(); n]
                }
                Err(e) => return Err(e),
            };
            let diversity: Vec<T> = agents.iter().map(|a| a.diversity).collect();
            let update = update_values_with_decay(
                &server.values,
                &z,
                &diversity,
                cfg.alpha1,
                cfg.alpha2,
                cfg.diversity_decay,
            )?;
            flags.value_reset = update.reset;
            server.values = update.state;

            // (3) sparsified reward, applied to each agent's own model
            let alloc = allocate_gradient(&u_n, &server.values.values, cfg.beta)?;
            flags.allocation_degenerate = alloc.degenerate;
            for (agent, g) in agents.iter_mut().zip(&alloc.gradients) {
                agent.params.descend(g, cfg.lr);
            }
            server.global_grad = u_n;
            zeta = Some(z);
            weights = Some(w);
            counts = Some(alloc.counts);
        }
        _ => {
            server.values = server.values.carry_forward();
        }
    }

    // (4) local training, independent per agent
    let global_protos = &server.global_protos;
    let steps: Vec<LocalStep<T>> = agents
        .par_iter()
        .map(|a| train_agent(a, global_protos, ctx, cfg.lambda))
        .collect::<Result<_>>()?;
    let mut losses = Vec::with_capacity(n);
    let mut accuracy = Vec::with_capacity(n);
    for (agent, step) in agents.iter_mut().zip(steps) {
        agent.params = step.params;
        agent.last_upload = Some(step.upload);
        agent.prototypes = step.prototypes;
        losses.push(step.loss);
        accuracy.push((step.test_accuracy, step.global_accuracy));
    }

    // (5) prototypes weighted by the current values
    let protos: Vec<PrototypeMap<T>> = agents.iter().map(|a| a.prototypes.clone()).collect();
    server.global_protos = aggregate_prototypes(&protos, &server.values.values);

    // (6) payoff
    let payoff = allocate_payoff(&server.values.values, &server.values.previous(), server.budget, t)?;
    flags.payoff_degenerate = payoff.degenerate;
    for (agent, &p) in agents.iter_mut().zip(&payoff.payoffs) {
        agent.payoff_total += p;
    }
    server.round = t;

    // (7) report
    let records = (0..n)
        .map(|i| AgentRecord {
            agent: agents[i].agent_id,
            value: Some(server.values.values[i]),
            zeta: zeta.as_ref().map(|z| z[i]),
            aggregation_weight: weights.as_ref().map(|w| w[i]),
            allocated_components: counts.as_ref().map(|c| c[i]),
            payoff: Some(payoff.payoffs[i]),
            compensation: Some(payoff.compensation[i]),
            train_loss: losses[i],
            test_accuracy: accuracy[i].0,
            global_accuracy: accuracy[i].1,
        })
        .collect::<Vec<_>>();
    let global_accuracy = accuracy.iter().map(|a| a.1).sum::<f64>() / n as f64;
    Ok(RoundReport {
        round: t,
        agents: records,
        global_accuracy,
        flags,
        upload: UploadConvention::ParamDeltaOverLr,
    })
}

/// A configured federation: encoded data, vocabulary, and evolving state.
pub struct Simulation<T> {
    config: FederationConfig<T>,
    seed: u64,
    shape: ModelShape,
    vocab: MotifVocabulary,
    server: ServerState<T>,
    agents: Vec<AgentState<T>>,
    global_test: Vec<EncodedGraph<T>>,
}

impl<T: Scalar> Simulation<T> {
    /// Round-0 state: uniform values, zero global gradient, a shared random
    /// initialization, and size-weighted initial prototypes.
    pub fn new(data: &FederationData, config: FederationConfig<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        if data.agents.is_empty() {
            return Err(Error::InvalidArgument("federation has no agents".into()));
        }
        if data.agents.iter().any(|a| a.train.is_empty() || a.test.is_empty()) {
            return Err(Error::Sizing("every agent needs train and test graphs".into()));
        }
        let vocab = build_vocabulary(data, config.max_ring_len, config.beta_s)?;
        let encoder = FeatureEncoder::fit(data.all_graphs());
        let shape = ModelShape::new(encoder.d_in(), config.d_hidden, data.n_classes())?;
        let init = ParamVector::init(shape, derive_seed(seed, &[tag::INIT]));

        let agents = data
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let train = encoder.encode_all(&a.train)?;
                let membership = vocab.membership(i).to_vec();
                let prototypes = local_prototypes(&init, &train, &membership);
                // an empty vocabulary gives nobody a diversity bonus
                let diversity = graph_diversity(&vocab, i).map(T::of).unwrap_or_else(|_| T::zero());
                Ok(AgentState {
                    agent_id: i,
                    test: encoder.encode_all(&a.test)?,
                    train,
                    membership,
                    params: init.clone(),
                    last_upload: None,
                    prototypes,
                    payoff_total: T::zero(),
                    diversity,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let protos: Vec<PrototypeMap<T>> = agents.iter().map(|a| a.prototypes.clone()).collect();
        let sizes: Vec<usize> = agents.iter().map(|a| a.train.len()).collect();
        let server = ServerState {
            values: ValueState::uniform(agents.len()),
            global_grad: GradientVector::zeros(shape.len()),
            global_protos: size_weighted_prototypes(&protos, &sizes),
            budget: config.budget,
            round: 0,
        };
        Ok(Simulation {
            global_test: encoder.encode_all(&data.global_test)?,
            config,
            seed,
            shape,
            vocab,
            server,
            agents,
        })
    }

    pub fn step(&mut self) -> Result<RoundReport<T>> {
        let ctx = RoundContext {
            config: &self.config,
            global_test: &self.global_test,
        };
        run_round(&mut self.server, &mut self.agents, &ctx)
    }

    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundReport<T>>> {
        (0..rounds).map(|_| self.step()).collect()
    }

    pub fn config(&self) -> &FederationConfig<T> {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn vocabulary(&self) -> &MotifVocabulary {
        &self.vocab
    }

    pub fn server(&self) -> &ServerState<T> {
        &self.server
    }

    pub fn agents(&self) -> &[AgentState<T>] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentState<T>] {
        &mut self.agents
    }

    pub fn round(&self) -> usize {
        self.server.round
    }
}

/// Local-only training with the same model, step size and epoch budget;
/// reports carry no value or payoff fields.
pub fn self_train<T: Scalar>(
    data: &FederationData,
    config: &FederationConfig<T>,
    seed: u64,
    rounds: usize,
) -> Result<Vec<RoundReport<T>>> {
    let mut sim = Simulation::new(data, config.clone(), seed)?;
    let ctx = RoundContext {
        config: &sim.config,
        global_test: &sim.global_test,
    };
    let empty = PrototypeMap::new();
    let mut reports = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let steps: Vec<LocalStep<T>> = sim
            .agents
            .par_iter()
            .map(|a| train_agent(a, &empty, &ctx, T::zero()))
            .collect::<Result<_>>()?;
        let mut records = Vec::with_capacity(steps.len());
        for (agent, step) in sim.agents.iter_mut().zip(steps) {
            agent.params = step.params;
            records.push(AgentRecord {
                agent: agent.agent_id,
                value: None,
                zeta: None,
                aggregation_weight: None,
                allocated_components: None,
                payoff: None,
                compensation: None,
                train_loss: step.loss,
                test_accuracy: step.test_accuracy,
                global_accuracy: step.global_accuracy,
            });
        }
        let global_accuracy = records.iter().map(|r| r.global_accuracy).sum::<f64>() / records.len() as f64;
        reports.push(RoundReport {
            round: t,
            agents: records,
            global_accuracy,
            flags: RoundFlags::default(),
            upload: UploadConvention::ParamDeltaOverLr,
        });
    }
    Ok(reports)
}
