//! Data-driven stochastic optimization: SAA, estimate-then-optimize (ETO) and
//! integrated estimation-optimization (IEO) on newsvendor and portfolio
//! problems, with the machinery to compare their regret distributions both by
//! simulation and through their limiting quadratic-form laws.
//!
//! Module map:
//! - [`stats`]: seeded streams, normal pdf/cdf/quantile/loss.
//! - [`models`]: parametric families, sampling, log-likelihood, MLE, Fisher information.
//! - [`problems`]: costs, closed-form expected costs, oracle decisions, regret.
//! - [`optim`]: dense simplex LP, grid/golden search, Nelder–Mead, water-filling.
//! - [`estimators`]: the three pipelines per problem.
//! - [`asymptotics`]: covariance models, limit laws, matrix-lemma and dominance checks.
//! - [`harness`]: replicated experiments, summaries, γ-sweeps, limit comparisons.
//! - [`cli`]: config parsing, command implementations, CSV/SVG/manifest output.

pub mod asymptotics;
pub mod cli;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod problems;
pub mod stats;

mod error;

pub use error::{Error, Result};
