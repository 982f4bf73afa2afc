//! Metropolis-within-Gibbs sampler for the univariate model.
//!
//! One sweep updates, in order: `β_f, β_g, σ²_f, σ²_g, σ²_ε, σ²_η, r_{1,f}, r_{2,f},
//! r_{1,g}, r_{2,g}, g₁₀, D*, x₀, x₁..x_T, x_{T+1}`, then an optional translation of
//! the whole path along the direction that leaves the data likelihood unchanged. The regression coefficients,
//! `g₁₀`, `D*` and `x_{T+1}` have Gaussian full conditionals; everything else is
//! updated by Metropolis-Hastings.

mod chain;
mod data_cache;
mod gibbs;
mod mh;

pub use chain::{
    initial_state, run_chain, run_chain_from, AcceptanceStats, Block, ChainOutput, Sampler, SweepDiagnostics,
};
pub use data_cache::DataCache;
pub use gibbs::{
    beta_f_conditional, beta_g_conditional, dstar_conditional, g_x10_conditional, gibbs_beta_f, gibbs_beta_g,
    gibbs_dstar, gibbs_g_x10, gibbs_x_next, x_next_moments,
};
#[cfg(test)]
pub(crate) use mh::linearized_inverse_gamma;
pub use mh::{
    mh_shift, mh_smoothness, mh_variance, mh_x0, mh_xt, shift_state, smoothness_log_target, variance_log_target,
    x0_log_target, xt_log_target, GpSide, VarianceKind,
};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Proposal for the latent states `x_1..x_T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XProposal {
    /// Independence proposal from the model linearized around the current `β`.
    Linearized,
    /// Gaussian random walk with variance `rw_var_x`.
    RandomWalk,
    /// Gaussian random walk with variance `t` for `x_t`.
    TimeScaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum X0Proposal {
    Linearized,
    RandomWalk,
}

/// Proposal for the four variance parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceProposal {
    /// Random walk on the standard deviation scale with s.d. `rw_sd_sigma`.
    RandomWalk,
    /// Inverse-gamma independence proposal from a linearized conditional.
    LinearizedInverseGamma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalConfig {
    pub rw_sd_sigma: f64,
    pub rw_sd_smooth: f64,
    pub x_proposal: XProposal,
    pub rw_var_x: f64,
    pub x0_proposal: X0Proposal,
    pub rw_var_x0: f64,
    pub variance_proposal: VarianceProposal,
    /// S.d. of the path translation move; `None` leaves it out of the sweep.
    pub shift_sd: Option<f64>,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            rw_sd_sigma: 0.05f64.sqrt(),
            rw_sd_smooth: 0.005f64.sqrt(),
            x_proposal: XProposal::RandomWalk,
            rw_var_x: 0.1,
            x0_proposal: X0Proposal::RandomWalk,
            rw_var_x0: 1.0,
            variance_proposal: VarianceProposal::RandomWalk,
            shift_sd: Some(1.0),
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rw_sd_sigma", self.rw_sd_sigma),
            ("rw_sd_smooth", self.rw_sd_smooth),
            ("rw_var_x", self.rw_var_x),
            ("rw_var_x0", self.rw_var_x0),
            ("shift_sd", self.shift_sd.unwrap_or(1.0)),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Metropolis-Hastings acceptance; NaN ratios reject.
pub(crate) fn accept(log_ratio: f64, rng: &mut RngStream) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.uniform().ln() < log_ratio
}

/// Treat a factorization failure at a proposed value as a zero-density proposal.
pub(crate) fn or_reject(v: Result<f64>) -> Result<f64> {
    match v {
        Err(Error::Factorization { .. }) | Err(Error::NumericalDegeneracy(_)) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}
