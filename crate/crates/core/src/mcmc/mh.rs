//! Metropolis-Hastings updates.

use nalgebra::DVector;

use super::data_cache::DataCache;
use super::gibbs::transition_terms;
use super::{accept, or_reject, ProposalConfig, VarianceProposal, X0Proposal, XProposal};
use crate::error::{Error, Result};
use crate::kernel::{corr_matrix, design_matrix, GpParams};
use crate::linalg::{add_jitter, Factor, DEFAULT_JITTER};
use crate::model::{
    data_inputs, log_x1, logjoint_latent_with, loglik_data, LatentState, LookupTable, ObservedSeries, PriorSpec,
};
use crate::rng::RngStream;
use crate::stats::{draw_inverse_gamma, draw_normal, logpdf_inverse_gamma_form, logpdf_lognormal, logpdf_normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    F,
    G,
    Eps,
    Eta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpSide {
    F,
    G,
}

fn variance_of(state: &LatentState, kind: VarianceKind) -> f64 {
    match kind {
        VarianceKind::F => state.theta_f.sigma2,
        VarianceKind::G => state.theta_g.sigma2,
        VarianceKind::Eps => state.s2_eps,
        VarianceKind::Eta => state.s2_eta,
    }
}

fn set_variance(state: &mut LatentState, kind: VarianceKind, v: f64) {
    match kind {
        VarianceKind::F => state.theta_f.sigma2 = v,
        VarianceKind::G => state.theta_g.sigma2 = v,
        VarianceKind::Eps => state.s2_eps = v,
        VarianceKind::Eta => state.s2_eta = v,
    }
}

fn variance_prior(prior: &PriorSpec, kind: VarianceKind) -> (f64, f64) {
    match kind {
        VarianceKind::F => (prior.alpha_f, prior.gamma_f),
        VarianceKind::G => (prior.alpha_g, prior.gamma_g),
        VarianceKind::Eps => (prior.alpha_eps, prior.gamma_eps),
        VarianceKind::Eta => (prior.alpha_eta, prior.gamma_eta),
    }
}

/// Log full conditional of one variance at value `s2` (on the variance scale), up to a constant.
pub fn variance_log_target(
    kind: VarianceKind,
    s2: f64,
    state: &LatentState,
    y: &ObservedSeries,
    table: &LookupTable,
    prior: &PriorSpec,
) -> Result<f64> {
    if !(s2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let (alpha, gamma) = variance_prior(prior, kind);
    let mut st = state.clone();
    set_variance(&mut st, kind, s2);
    let lik = match kind {
        VarianceKind::F | VarianceKind::Eps => loglik_data(y, &st.x, &st.theta_f, st.s2_eps)?,
        VarianceKind::G => {
            let aug = table.augmented(st.x[0])?;
            table.log_g_block(&st, &aug) + table.log_transitions(&st, 1..=st.horizon())?
        }
        VarianceKind::Eta => log_x1(&st) + table.log_transitions(&st, 1..=st.horizon())?,
    };
    Ok(logpdf_inverse_gamma_form(s2, alpha, gamma) + lik)
}

/// Inverse-gamma `(shape, scale)` of the linearized proposal for one variance.
pub(crate) fn linearized_inverse_gamma(
    kind: VarianceKind,
    state: &LatentState,
    y: &ObservedSeries,
    table: &LookupTable,
    prior: &PriorSpec,
) -> Result<(f64, f64)> {
    let (alpha, gamma) = variance_prior(prior, kind);
    let horizon = state.horizon() as f64;
    match kind {
        VarianceKind::F | VarianceKind::Eps => {
            // Pretend σ²_ε = σ²_f, so the data covariance is σ² (A_f + I).
            let points = data_inputs(&state.x, y.len());
            let a = add_jitter(&corr_matrix(&points, &state.theta_f.smooth, DEFAULT_JITTER), 1.0);
            let f = Factor::cholesky(&a, "data correlation")?;
            let r = y.values() - design_matrix(&points) * &state.theta_f.beta;
            Ok(((horizon + alpha) / 2.0, (gamma + f.quad(&r)) / 2.0))
        }
        VarianceKind::G | VarianceKind::Eta => {
            // Pretend σ²_η = σ²_g, so each transition has variance σ² (2 - sᵀA⁻¹s).
            let aug = table.augmented(state.x[0])?;
            let beta = &state.theta_g.beta;
            let r = &state.dstar - table.conditional_mean(&aug, state.g_x10, beta);
            let mut scale = gamma + (state.g_x10 - aug.h10.dot(beta)).powi(2) + aug.sigma.quad(&r);
            scale += (state.x[1] - state.g_x10).powi(2);
            for (k, term) in transition_terms(state, table).iter().enumerate() {
                let t = k + 1;
                let mean = term.w.dot(beta) + term.u.dot(&state.dstar);
                scale += (state.x[t + 1] - mean).powi(2) / (2.0 - term.explained);
            }
            let n = table.len() as f64;
            Ok(((alpha + 2.0 + n + horizon) / 2.0, scale / 2.0))
        }
    }
}

fn log_inverse_gamma_kernel(s: f64, shape: f64, scale: f64) -> f64 {
    -(shape + 1.0) * s.ln() - scale / s
}

/// Metropolis-Hastings update of one variance; returns whether the move was accepted.
pub fn mh_variance(
    kind: VarianceKind,
    state: &mut LatentState,
    y: &ObservedSeries,
    table: &LookupTable,
    prior: &PriorSpec,
    config: &ProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = variance_of(state, kind);
    let (proposed, log_ratio) = match config.variance_proposal {
        VarianceProposal::RandomWalk => {
            let sd = current.sqrt();
            let sd_new = draw_normal(sd, config.rw_sd_sigma, rng)?;
            if sd_new <= 0.0 {
                return Ok(false);
            }
            let s2 = sd_new * sd_new;
            let new = or_reject(variance_log_target(kind, s2, state, y, table, prior))?;
            let old = variance_log_target(kind, current, state, y, table, prior)?;
            // Jacobian of σ -> σ² is 2σ.
            (s2, new - old + (sd_new / sd).ln())
        }
        VarianceProposal::LinearizedInverseGamma => {
            let (shape, scale) = linearized_inverse_gamma(kind, state, y, table, prior)?;
            let s2 = draw_inverse_gamma(shape, scale, rng)?;
            let new = or_reject(variance_log_target(kind, s2, state, y, table, prior))?;
            let old = variance_log_target(kind, current, state, y, table, prior)?;
            let q = log_inverse_gamma_kernel(current, shape, scale) - log_inverse_gamma_kernel(s2, shape, scale);
            (s2, new - old + q)
        }
    };
    if accept(log_ratio, rng) {
        set_variance(state, kind, proposed);
        Ok(true)
    } else {
        Ok(false)
    }
}

fn smoothness_prior(prior: &PriorSpec, side: GpSide, i: usize) -> (f64, f64) {
    match side {
        GpSide::F => (prior.mu_r_f[i], prior.s2_r_f[i]),
        GpSide::G => (prior.mu_r_g[i], prior.s2_r_g[i]),
    }
}

fn with_smooth(theta: &GpParams, i: usize, r: f64) -> Result<GpParams> {
    let mut th = theta.clone();
    th.smooth = th.smooth.with(i, r)?;
    Ok(th)
}

/// Log full conditional of `r_{i,f}` or `r_{i,g}` at value `r`. For `g` the table
/// must be built with the smoothness in `state`; `g_table` is the table at `r`.
pub fn smoothness_log_target(
    side: GpSide,
    i: usize,
    r: f64,
    state: &LatentState,
    y: &ObservedSeries,
    g_table: &LookupTable,
    prior: &PriorSpec,
) -> Result<f64> {
    if !(r > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let (mu, s2) = smoothness_prior(prior, side, i);
    let lik = match side {
        GpSide::F => loglik_data(y, &state.x, &with_smooth(&state.theta_f, i, r)?, state.s2_eps)?,
        GpSide::G => {
            let mut st = state.clone();
            st.theta_g = with_smooth(&state.theta_g, i, r)?;
            let aug = g_table.augmented(st.x[0])?;
            g_table.log_g_block(&st, &aug) + g_table.log_transitions(&st, 1..=st.horizon())?
        }
    };
    Ok(logpdf_lognormal(r, mu, s2) + lik)
}

/// Random-walk update of one smoothness entry. For `g`, `table` is replaced on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn mh_smoothness(
    side: GpSide,
    i: usize,
    state: &mut LatentState,
    y: &ObservedSeries,
    grid: &crate::kernel::Grid,
    table: &mut LookupTable,
    prior: &PriorSpec,
    config: &ProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let theta = match side {
        GpSide::F => &state.theta_f,
        GpSide::G => &state.theta_g,
    };
    let current = theta.smooth.get(i);
    let proposed = draw_normal(current, config.rw_sd_smooth, rng)?;
    if proposed <= 0.0 {
        return Ok(false);
    }
    let new_table = match side {
        GpSide::F => None,
        GpSide::G => match LookupTable::new(grid, &theta.smooth.with(i, proposed)?) {
            Ok(t) => Some(t),
            Err(Error::Factorization { .. }) => return Ok(false),
            Err(e) => return Err(e),
        },
    };
    let new_tab = new_table.as_ref().unwrap_or(table);
    let new = or_reject(smoothness_log_target(side, i, proposed, state, y, new_tab, prior))?;
    let old = smoothness_log_target(side, i, current, state, y, table, prior)?;
    if accept(new - old, rng) {
        match side {
            GpSide::F => state.theta_f = with_smooth(&state.theta_f, i, proposed)?,
            GpSide::G => {
                state.theta_g = with_smooth(&state.theta_g, i, proposed)?;
                *table = new_table.expect("built for g");
            }
        }
        Ok(true)
    } else {
        Ok(false)
    }
}

/// `log N(x₀; μ_{x0}, σ²_{x0}) + log[g₁₀, D* | x₀, θ_g]` at `x₀ = x0`.
pub fn x0_log_target(x0: f64, state: &LatentState, table: &LookupTable, prior: &PriorSpec) -> Result<f64> {
    let mut st = state.clone();
    st.x[0] = x0;
    let aug = table.augmented(x0)?;
    Ok(logpdf_normal(x0, prior.mu_x0, prior.s2_x0) + table.log_g_block(&st, &aug))
}

pub fn mh_x0(
    state: &mut LatentState,
    table: &LookupTable,
    prior: &PriorSpec,
    config: &ProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = state.x[0];
    let (proposed, q) = match config.x0_proposal {
        X0Proposal::RandomWalk => (draw_normal(current, config.rw_var_x0.sqrt(), rng)?, 0.0),
        X0Proposal::Linearized => {
            let b = &state.theta_g.beta;
            let var = 1.0 / (1.0 / prior.s2_x0 + b[2] * b[2] / state.s2_eta);
            let mean = var * (prior.mu_x0 / prior.s2_x0 + (state.x[1] - b[0] - b[1]) * b[2] / state.s2_eta);
            let p = draw_normal(mean, var.sqrt(), rng)?;
            (p, logpdf_normal(current, mean, var) - logpdf_normal(p, mean, var))
        }
    };
    let new = or_reject(x0_log_target(proposed, state, table, prior))?;
    let old = x0_log_target(current, state, table, prior)?;
    if accept(new - old + q, rng) {
        state.x[0] = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Latent-process part of the full conditional of `x_t`, `1 <= t <= T`, at value `xt`:
/// the transition into `x_t` (or `[x₁ | g₁₀]`) and the transition out of it.
fn xt_latent_terms(t: usize, xt: f64, state: &LatentState, table: &LookupTable, weights: &DVector<f64>) -> Result<f64> {
    let mut st_back = 0.0;
    if t == 1 {
        st_back += logpdf_normal(xt, state.g_x10, state.s2_eta);
    } else {
        let m = table.system().moments_with_weights(
            &crate::kernel::InputPoint::scalar(t as f64, state.x[t - 1]),
            weights,
            &state.theta_g.beta,
            state.theta_g.sigma2,
            state.s2_eta,
        )?;
        st_back += logpdf_normal(xt, m.mean, m.var);
    }
    let m = table.system().moments_with_weights(
        &crate::kernel::InputPoint::scalar((t + 1) as f64, xt),
        weights,
        &state.theta_g.beta,
        state.theta_g.sigma2,
        state.s2_eta,
    )?;
    Ok(st_back + logpdf_normal(state.x[t + 1], m.mean, m.var))
}

/// Full conditional of `x_t` at value `xt` using full recomputation of the data likelihood.
pub fn xt_log_target(t: usize, xt: f64, state: &LatentState, y: &ObservedSeries, table: &LookupTable) -> Result<f64> {
    let w = table.system().weights(&state.dstar, &state.theta_g.beta);
    let mut st = state.clone();
    st.x[t] = xt;
    Ok(xt_latent_terms(t, xt, state, table, &w)? + loglik_data(y, &st.x, &st.theta_f, st.s2_eps)?)
}

/// Update of `x_t`, `1 <= t <= T`. The data term is evaluated through `cache`, which is
/// refreshed on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn mh_xt(
    t: usize,
    state: &mut LatentState,
    y: &ObservedSeries,
    table: &LookupTable,
    weights: &DVector<f64>,
    cache: &mut DataCache,
    config: &ProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let horizon = state.horizon();
    if t == 0 || t > horizon {
        return Err(Error::invalid(format!("x_{t} is not updated by mh_xt")));
    }
    let current = state.x[t];
    let (proposed, q) = match config.x_proposal {
        XProposal::RandomWalk => (draw_normal(current, config.rw_var_x.sqrt(), rng)?, 0.0),
        XProposal::TimeScaled => (draw_normal(current, (t as f64).sqrt(), rng)?, 0.0),
        XProposal::Linearized => {
            let bg = &state.theta_g.beta;
            let bf = &state.theta_f.beta;
            let tt = t as f64;
            let var = 1.0 / ((1.0 + bg[2] * bg[2]) / state.s2_eta + bf[2] * bf[2] / state.s2_eps);
            // x₁ is centred on g(1, x₀) exactly; later states use the linear part of g.
            let back = if t == 1 {
                state.g_x10
            } else {
                bg[0] + bg[1] * tt + bg[2] * state.x[t - 1]
            };
            let fwd = (state.x[t + 1] - bg[0] - bg[1] * (tt + 1.0)) * bg[2];
            let obs = (y.at(t) - bf[0] - bf[1] * tt) * bf[2];
            let mean = var * ((back + fwd) / state.s2_eta + obs / state.s2_eps);
            let p = draw_normal(mean, var.sqrt(), rng)?;
            (p, logpdf_normal(current, mean, var) - logpdf_normal(p, mean, var))
        }
    };
    let latent_new = or_reject(xt_latent_terms(t, proposed, state, table, weights))?;
    let latent_old = xt_latent_terms(t, current, state, table, weights)?;
    let data = cache.log_ratio(t, proposed, state, y);
    if accept(latent_new - latent_old + data + q, rng) {
        cache.update(t, proposed, state, y);
        state.x[t] = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Translates the latent path by `c` together with the coefficients that keep
/// the data likelihood fixed: `x_t += c`, `g₁₀ += c`, `β_{f,0} -= β_{f,2} c`, and
/// `β_{g,0}`, `D*` shifted by `(1 - β_{g,2}) c`. `shift_state(s, -c)` undoes it.
pub fn shift_state(state: &mut LatentState, c: f64) {
    state.x.add_scalar_mut(c);
    state.g_x10 += c;
    state.theta_f.beta[0] -= state.theta_f.beta[2] * c;
    let d = (1.0 - state.theta_g.beta[2]) * c;
    state.theta_g.beta[0] += d;
    state.dstar.add_scalar_mut(d);
}

/// Path translation move with `c ~ N(0, shift_sd²)`. The map has unit Jacobian and
/// the proposal is symmetric, so the ratio is prior times latent density; the data
/// term cancels exactly. Returns `None` when the move is disabled.
pub fn mh_shift(
    state: &mut LatentState,
    table: &LookupTable,
    prior: &PriorSpec,
    config: &ProposalConfig,
    rng: &mut RngStream,
) -> Result<Option<bool>> {
    let Some(sd) = config.shift_sd else {
        return Ok(None);
    };
    let c = draw_normal(0.0, sd, rng)?;
    let mut proposed = state.clone();
    shift_state(&mut proposed, c);
    let target = |s: &LatentState| -> Result<f64> { Ok(prior.log_prior(s)? + logjoint_latent_with(s, table, prior)?) };
    let new = or_reject(target(&proposed))?;
    let old = target(state)?;
    if accept(new - old, rng) {
        *state = proposed;
        Ok(Some(true))
    } else {
        Ok(Some(false))
    }
}
