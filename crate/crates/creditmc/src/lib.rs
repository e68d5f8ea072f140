//! Rare-event Monte Carlo for copula credit-risk portfolios.
//!
//! The crate estimates tail probabilities P(L > gamma), value-at-risk, and
//! conditional value-at-risk of a portfolio loss L under Gaussian-factor,
//! t-factor, and Clayton-copula default models. Beyond crude Monte Carlo it
//! provides exponential-twisting importance sampling (with an optional
//! factor mean shift), an adaptive cross-entropy proposal for the t model,
//! and dynamic splitting along a gamma-subordinator embedding of the loss.
//!
//! Entry points: [`harness::run_experiment`] dispatches a configured
//! estimator; the per-method drivers live in [`cmc`], [`importance`],
//! [`cross_entropy`], and [`splitting`].

pub mod cmc;
pub mod copula;
pub mod cross_entropy;
pub mod dist;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod importance;
pub mod parallel;
pub mod portfolio;
pub mod report;
pub mod rng;
pub mod roots;
pub mod special;
pub mod splitting;
pub mod stats;

pub use cmc::EstimateReport;
pub use error::{Error, Result};
pub use harness::{run_experiment, run_quantile, ExperimentConfig, Method, ModelKind};
pub use portfolio::{Model, Portfolio};
