//! Deterministic simulator for incentive-aware graph federated learning.
//!
//! Agents train a small message-passing graph classifier on private graph
//! collections. The server values each agent from gradient alignment and
//! motif diversity, rewards it with a value-dependent sparsification of the
//! aggregated gradient and a payoff share, and steers local training with
//! value-weighted motif prototypes.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`
//! (and `f32` where a narrower run is useful).

pub mod error;
pub mod experiment;
pub mod federation;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod motif;
pub mod rng;
pub mod scalar;
pub mod valuation;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Params = model::ParamVector<Real>;
pub type Gradient = model::GradientVector<Real>;
pub type Prototypes = model::PrototypeMap<Real>;
pub type Values = valuation::ValueState<Real>;
pub type Config = federation::FederationConfig<Real>;
pub type Sim = federation::Simulation<Real>;
pub type Report = federation::RoundReport<Real>;

pub type Params32 = model::ParamVector<f32>;
pub type Gradient32 = model::GradientVector<f32>;
pub type Config32 = federation::FederationConfig<f32>;
pub type Sim32 = federation::Simulation<f32>;
pub type Report32 = federation::RoundReport<f32>;
