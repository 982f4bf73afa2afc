//! Multivariate extension: `p` observed and `q` latent coordinates.
//!
//! The processes `f` and `g` are vector-valued Gaussian processes with mean
//! `Bᵀh(z)` and covariance `c(z₁, z₂) Σ`. The look-up table `D*` becomes an
//! `n x q` matrix and the data covariance `A_f ⊗ Σ_f + I ⊗ Σ_ε` is handled densely.
//! None of the coefficient or covariance blocks has a closed-form conditional, so
//! every block except `x_{T+1}` is updated by Metropolis-Hastings.

mod chain;
mod forecast;
mod mh;
mod model;

pub use chain::{
    mv_initial_state, mv_run_chain, mv_run_chain_from, MvAcceptanceStats, MvBlock, MvChainOutput, MvSampler,
    MvSweepDiagnostics,
};
pub use forecast::{mv_forecast_k_step, mv_forecast_one_step};
pub use mh::{
    additive_move, b_f_proposal, b_g_proposal, b_log_target, cholesky_walk, cov_iw_proposal, cov_log_target,
    dstar_log_target, dstar_proposal, g_x10_log_target, g_x10_proposal, gibbs_mv_x_next, log_cholesky_jacobian, mh_b_f,
    mh_b_g, mh_cov, mh_dstar, mh_g_x10, mh_mv_smoothness, mh_mv_x0, mh_mv_xt, mv_smoothness_log_target,
    mv_x0_log_target, mv_xt_log_target, tmcmc_additive_block, tmcmc_propose, MatrixNormalProposal,
};
pub use model::{
    mv_augmented, mv_conditional_mean, mv_data_covariance, mv_data_inputs, mv_data_mean, mv_kriging_moments,
    mv_log_g_block, mv_log_posterior, mv_log_transitions, mv_log_x1, mv_logjoint_latent_with, mv_loglik_data,
    mv_moments_with_weights, mv_transition, mv_weights, BPriorScale, CovKind, Cps4Generator, MvGpParams, MvLatentState,
    MvMoments, MvObservedSeries, MvPriorSpec, MvSimulatedSeries, Side,
};

use crate::error::{Error, Result};

/// Proposal for the four covariance matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovProposal {
    /// Block random walk on the free entries of the Cholesky factor.
    CholeskyWalk,
    /// Inverse-Wishart independence proposal.
    InverseWishart,
}

/// Proposal for `B_g`, `g₁₀` and `D*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GBlockProposal {
    /// Additive transformation: one half-normal step size, a random sign per entry.
    Tmcmc,
    /// Normal or matrix-normal independence proposals.
    Independence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvXProposal {
    Linearized,
    RandomWalk,
    Tmcmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvX0Proposal {
    Linearized,
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvProposalConfig {
    pub cov_proposal: CovProposal,
    /// Step s.d. for each Cholesky entry.
    pub rw_sd_chol: f64,
    pub rw_sd_smooth: f64,
    pub g_block_proposal: GBlockProposal,
    /// Variance of the normal whose absolute value is the additive step.
    pub tmcmc_var: f64,
    pub x_proposal: MvXProposal,
    pub rw_var_x: f64,
    pub x0_proposal: MvX0Proposal,
    pub rw_var_x0: f64,
}

impl Default for MvProposalConfig {
    fn default() -> Self {
        Self {
            cov_proposal: CovProposal::CholeskyWalk,
            rw_sd_chol: 0.005f64.sqrt(),
            rw_sd_smooth: 0.005f64.sqrt(),
            g_block_proposal: GBlockProposal::Tmcmc,
            tmcmc_var: 0.05,
            x_proposal: MvXProposal::RandomWalk,
            rw_var_x: 0.1,
            x0_proposal: MvX0Proposal::RandomWalk,
            rw_var_x0: 1.0,
        }
    }
}

impl MvProposalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rw_sd_chol", self.rw_sd_chol),
            ("rw_sd_smooth", self.rw_sd_smooth),
            ("tmcmc_var", self.tmcmc_var),
            ("rw_var_x", self.rw_var_x),
            ("rw_var_x0", self.rw_var_x0),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
