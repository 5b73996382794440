//! Quantile regression toolkit.
//!
//! Least squares, check-loss quantile regression, Bayesian quantile
//! regression through an asymmetric-Laplace Gibbs sampler, two-stage least
//! squares with over-identification and weak-instrument statistics, and
//! bootstrap tests of slope equality across quantiles. The [`pipeline`]
//! module ties them together over date-indexed CSV data.

pub mod bayes;
pub mod classical;
pub mod cli;
pub mod endogeneity;
pub mod error;
pub mod inference;
mod linalg;
pub mod model;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
