//! Bayesian inference for state-space models whose evolution and observation
//! functions are unknown and given Gaussian-process priors.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod multivariate;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
