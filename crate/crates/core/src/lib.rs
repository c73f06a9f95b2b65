//! Desk-scale ultra-dense-network mobility load balancing workbench.
//!
//! The crate provides:
//! - a discrete-time handover simulator ([`env`]) with A3 triggers,
//!   admission control, and load/reward computation;
//! - load-driven k-means clustering with Calinski-Harabasz model selection
//!   ([`clustering`]) forming the top control layer;
//! - a minimal dense-network engine with exact reverse-mode gradients
//!   ([`nn`]);
//! - an off-policy deep actor-critic learner trained under multiple
//!   behavior policies through an asynchronous parameter server ([`agent`]);
//! - rule-based and tabular baselines ([`baselines`]);
//! - an offline-evaluation safeguard for online control ([`safeguard`]);
//! - experiment orchestration with CSV outputs ([`harness`]).
//!
//! All numeric code is generic over [`scalar::Real`] (`f32`/`f64`); the
//! aliases below fix the default `f64` instantiation used by the CLI and
//! the test suites.

pub mod agent;
pub mod baselines;
pub mod clustering;
pub mod config;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod safeguard;
pub mod scalar;

/// Default scalar for simulations and training.
pub type Scalar = f64;

pub type Scenario64 = env::Scenario<Scalar>;
pub type NetworkState64 = env::NetworkState<Scalar>;
pub type CioMatrix64 = env::CioMatrix<Scalar>;
pub type StateVector64 = env::StateVector<Scalar>;
pub type DenseNetwork64 = nn::DenseNetwork<Scalar>;
pub type ClusterAssignment64 = clustering::ClusterAssignment<Scalar>;
