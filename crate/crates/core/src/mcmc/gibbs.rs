//! Gaussian full conditionals.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernel::{design_matrix, KrigingMoments};
use crate::linalg::{Factor, GaussianConditional};
use crate::model::{data_covariance, data_inputs, LatentState, LookupTable, ObservedSeries, PriorSpec, TransitionTerm};
use crate::rng::RngStream;
use crate::stats::draw_normal;

fn prior_information(mean: &DVector<f64>, cov: &DMatrix<f64>, block: &str) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let f = Factor::cholesky(cov, block)?;
    let p = f.inverse();
    let b = &p * mean;
    Ok((p, b))
}

/// `β_f | ·`: precision `Hᵀ V⁻¹ H + Σ₀⁻¹` and linear term `Hᵀ V⁻¹ y + Σ₀⁻¹ β₀`
/// with `V = σ²_f A_f + σ²_ε I`.
pub fn beta_f_conditional(state: &LatentState, y: &ObservedSeries, prior: &PriorSpec) -> Result<GaussianConditional> {
    let points = data_inputs(&state.x, y.len());
    let v = Factor::cholesky(
        &data_covariance(&points, &state.theta_f, state.s2_eps),
        "data covariance",
    )?;
    let h = design_matrix(&points);
    let vinv_h = v.solve_mat(&h);
    let (p0, b0) = prior_information(&prior.beta_f0, &prior.sigma_beta_f0, "prior covariance of beta_f")?;
    Ok(GaussianConditional {
        precision: h.transpose() * &vinv_h + p0,
        linear: vinv_h.transpose() * y.values() + b0,
    })
}

pub fn gibbs_beta_f(state: &mut LatentState, y: &ObservedSeries, prior: &PriorSpec, rng: &mut RngStream) -> Result<()> {
    state.theta_f.beta = beta_f_conditional(state, y, prior)?.draw(rng, "beta_f conditional precision")?;
    Ok(())
}

pub(crate) fn transition_terms(state: &LatentState, table: &LookupTable) -> Vec<TransitionTerm> {
    (1..=state.horizon())
        .map(|t| table.transition_term(t + 1, state.x[t]))
        .collect()
}

/// Variance `σ²_g (1 - sᵀA⁻¹s) + σ²_η` of one transition.
pub(crate) fn transition_var(state: &LatentState, term: &TransitionTerm) -> f64 {
    state.theta_g.sigma2 * (1.0 - term.explained).max(0.0) + state.s2_eta
}

/// `β_g | ·`. Combines the prior, the joint density of `(D*, g₁₀)` and every
/// transition `x_t -> x_{t+1}`, `t = 1..T`, whose mean is linear in `β_g`.
pub fn beta_g_conditional(state: &LatentState, table: &LookupTable, prior: &PriorSpec) -> Result<GaussianConditional> {
    let aug = table.augmented(state.x[0])?;
    let s2 = state.theta_g.sigma2;
    let (mut p, mut b) = prior_information(&prior.beta_g0, &prior.sigma_beta_g0, "prior covariance of beta_g")?;
    // (D*, g₁₀) factors as [g₁₀][D* | g₁₀], the second residual being D̃ - H̃β.
    let h = table.system().design();
    let h_tilde = h - &aug.s10 * aug.h10.transpose();
    let d_tilde = &state.dstar - &aug.s10 * state.g_x10;
    let sinv_h = aug.sigma.solve_mat(&h_tilde);
    p += (&aug.h10 * aug.h10.transpose() + h_tilde.transpose() * &sinv_h) / s2;
    b += (&aug.h10 * state.g_x10 + sinv_h.transpose() * &d_tilde) / s2;
    for (k, term) in transition_terms(state, table).iter().enumerate() {
        let t = k + 1;
        let v = transition_var(state, term);
        p += &term.w * term.w.transpose() / v;
        b += &term.w * ((state.x[t + 1] - term.u.dot(&state.dstar)) / v);
    }
    Ok(GaussianConditional {
        precision: p,
        linear: b,
    })
}

pub fn gibbs_beta_g(
    state: &mut LatentState,
    table: &LookupTable,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<()> {
    state.theta_g.beta = beta_g_conditional(state, table, prior)?.draw(rng, "beta_g conditional precision")?;
    Ok(())
}

/// `g₁₀ | ·` as `(mean, variance)`.
pub fn g_x10_conditional(state: &LatentState, table: &LookupTable) -> Result<(f64, f64)> {
    let aug = table.augmented(state.x[0])?;
    let beta = &state.theta_g.beta;
    let s2 = state.theta_g.sigma2;
    let prior_mean = aug.h10.dot(beta);
    let dz = &state.dstar - table.system().design() * beta + &aug.s10 * prior_mean;
    let sinv_s = aug.sigma.solve(&aug.s10);
    let precision = 1.0 / state.s2_eta + (1.0 + aug.s10.dot(&sinv_s)) / s2;
    let linear = state.x[1] / state.s2_eta + (prior_mean + sinv_s.dot(&dz)) / s2;
    Ok((linear / precision, 1.0 / precision))
}

pub fn gibbs_g_x10(state: &mut LatentState, table: &LookupTable, rng: &mut RngStream) -> Result<()> {
    let (m, v) = g_x10_conditional(state, table)?;
    state.g_x10 = draw_normal(m, v.sqrt(), rng)?;
    Ok(())
}

/// `D* | ·`: precision `Σ⁻¹/σ²_g + Σ_t u_t u_tᵀ / v_t` with `u_t = A⁻¹ s_t`.
pub fn dstar_conditional(state: &LatentState, table: &LookupTable) -> Result<GaussianConditional> {
    let aug = table.augmented(state.x[0])?;
    let beta = &state.theta_g.beta;
    let s2 = state.theta_g.sigma2;
    let sinv = aug.sigma.inverse();
    let mu = table.conditional_mean(&aug, state.g_x10, beta);
    let mut p = &sinv / s2;
    let mut b = &sinv * mu / s2;
    for (k, term) in transition_terms(state, table).iter().enumerate() {
        let t = k + 1;
        let v = transition_var(state, term);
        p += &term.u * term.u.transpose() / v;
        b += &term.u * ((state.x[t + 1] - term.w.dot(beta)) / v);
    }
    Ok(GaussianConditional {
        precision: p,
        linear: b,
    })
}

pub fn gibbs_dstar(state: &mut LatentState, table: &LookupTable, rng: &mut RngStream) -> Result<()> {
    state.dstar = dstar_conditional(state, table)?.draw(rng, "look-up table conditional precision")?;
    Ok(())
}

/// Moments of `x_{T+1} | x_T, D*, θ_g, σ²_η`.
pub fn x_next_moments(state: &LatentState, table: &LookupTable) -> Result<KrigingMoments> {
    table.transition(state, state.horizon())
}

pub fn gibbs_x_next(state: &mut LatentState, table: &LookupTable, rng: &mut RngStream) -> Result<()> {
    let m = x_next_moments(state, table)?;
    let last = state.horizon() + 1;
    state.x[last] = draw_normal(m.mean, m.var.sqrt(), rng)?;
    Ok(())
}
