//! Proposals and Metropolis-Hastings updates of the multivariate sampler.
//!
//! The independence proposals come from the conditionals obtained by taking each
//! noise covariance proportional to its process covariance, with ratio
//! `κ = tr(Σ_noise) / tr(Σ_process)`. For `p = q = 1` they are the exact full
//! conditionals of the univariate model.

use nalgebra::{DMatrix, DVector};

use super::model::{
    logpdf_mvn, mv_augmented, mv_conditional_mean, mv_data_inputs, mv_log_g_block, mv_log_transitions, mv_log_x1,
    mv_loglik_data, mv_transition, mv_weights, BPriorScale, CovKind, MvLatentState, MvObservedSeries, MvPriorSpec,
    Side,
};
use super::{CovProposal, GBlockProposal, MvProposalConfig, MvX0Proposal, MvXProposal};
use crate::error::{Error, Result};
use crate::kernel::{corr_matrix, design_matrix, Grid, Smoothness};
use crate::linalg::{symmetrize, Factor, DEFAULT_JITTER};
use crate::mcmc::{accept, or_reject};
use crate::model::LookupTable;
use crate::rng::RngStream;
use crate::stats::{
    draw_inverse_wishart, draw_matrix_normal, draw_mvn, logpdf_inverse_wishart_form, logpdf_matrix_normal,
};

/// Matrix-normal proposal `MN(mean, row, col)`.
#[derive(Clone, Debug)]
pub struct MatrixNormalProposal {
    pub mean: DMatrix<f64>,
    pub row: DMatrix<f64>,
    pub col: DMatrix<f64>,
}

impl MatrixNormalProposal {
    /// From row precision `P` and linear term `L`: mean `P⁻¹L`, row covariance `P⁻¹`.
    fn from_precision(prec: DMatrix<f64>, lin: DMatrix<f64>, col: DMatrix<f64>, block: &str) -> Result<Self> {
        let f = Factor::cholesky(&symmetrize(&prec), block)?;
        Ok(Self {
            mean: f.solve_mat(&lin),
            row: symmetrize(&f.inverse()),
            col,
        })
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<DMatrix<f64>> {
        draw_matrix_normal(&self.mean, &self.row, &self.col, rng)
    }

    pub fn log_density(&self, x: &DMatrix<f64>) -> Result<f64> {
        let u = Factor::cholesky(&self.row, "matrix-normal proposal row covariance")?;
        let v = Factor::cholesky(&self.col, "matrix-normal proposal column covariance")?;
        Ok(logpdf_matrix_normal(x, &self.mean, &u, &v))
    }
}

fn ratio(num: &DMatrix<f64>, den: &DMatrix<f64>) -> f64 {
    num.trace() / den.trace()
}

fn prior_weight(prior: &MvPriorSpec, side: Side, sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (b0, sb) = match side {
        Side::F => (&prior.b_f0, &prior.sigma_bf0),
        Side::G => (&prior.b_g0, &prior.sigma_bg0),
    };
    let lam = match prior.b_prior_scale {
        BPriorScale::Conditional => 1.0,
        BPriorScale::Fixed => sigma.trace() / sigma.nrows() as f64,
    };
    let w = Factor::cholesky(sb, "prior row covariance of B")?.inverse() * (lam / prior.psi);
    let wb = &w * b0;
    Ok((w, wb))
}

/// Proposal for `B_f` from the conditional with `Σ_ε = κ Σ_f`.
pub fn b_f_proposal(state: &MvLatentState, y: &MvObservedSeries, prior: &MvPriorSpec) -> Result<MatrixNormalProposal> {
    let th = &state.theta_f;
    let points = mv_data_inputs(&state.x, y.len());
    let kappa = ratio(&state.sigma_eps, &th.sigma);
    let mut v = corr_matrix(&points, &th.smooth, DEFAULT_JITTER);
    for i in 0..v.nrows() {
        v[(i, i)] += kappa;
    }
    let vf = Factor::cholesky(&v, "B_f proposal covariance")?;
    let h = design_matrix(&points);
    let vih = vf.solve_mat(&h);
    let (w, wb) = prior_weight(prior, Side::F, &th.sigma)?;
    let prec = h.transpose() * &vih + w;
    let lin = vih.transpose() * y.values() + wb;
    MatrixNormalProposal::from_precision(prec, lin, th.sigma.clone(), "B_f proposal")
}

/// Per-transition quantities `(u_t, w_t, c_t)` with `c_t = 1 - s_tᵀA⁻¹s_t + κ`.
fn transition_terms(state: &MvLatentState, table: &LookupTable, kappa: f64) -> Vec<(DVector<f64>, DVector<f64>, f64)> {
    (1..=state.horizon())
        .map(|t| {
            let term = table.transition_term_at(&state.input(t + 1, t));
            (term.u, term.w, 1.0 - term.explained + kappa)
        })
        .collect()
}

/// Proposal for `B_g` from the conditional with `Σ_η = κ Σ_g`.
pub fn b_g_proposal(state: &MvLatentState, table: &LookupTable, prior: &MvPriorSpec) -> Result<MatrixNormalProposal> {
    let th = &state.theta_g;
    let aug = mv_augmented(table, state)?;
    let kappa = ratio(&state.sigma_eta, &th.sigma);
    let sinv = aug.sigma.inverse();
    let ht = table.system().design() - &aug.s10 * aug.h10.transpose();
    let dt = &state.dstar - &aug.s10 * state.g_x10.transpose();
    let (w0, wb) = prior_weight(prior, Side::G, &th.sigma)?;
    let mut prec = w0 + &aug.h10 * aug.h10.transpose() + ht.transpose() * &sinv * &ht;
    let mut lin = wb + &aug.h10 * state.g_x10.transpose() + ht.transpose() * &sinv * &dt;
    for (t, (u, w, c)) in transition_terms(state, table, kappa).into_iter().enumerate() {
        prec += &w * w.transpose() / c;
        let r = state.x_at(t + 2) - state.dstar.transpose() * &u;
        lin += &w * r.transpose() / c;
    }
    MatrixNormalProposal::from_precision(prec, lin, th.sigma.clone(), "B_g proposal")
}

/// Mean and covariance of the proposal for `g₁₀` with `Σ_η = κ Σ_g`.
pub fn g_x10_proposal(state: &MvLatentState, table: &LookupTable) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let th = &state.theta_g;
    let aug = mv_augmented(table, state)?;
    let kappa = ratio(&state.sigma_eta, &th.sigma);
    let sis = aug.sigma.solve(&aug.s10);
    let a = 1.0 + 1.0 / kappa + aug.s10.dot(&sis);
    let dz = &state.dstar - table.system().design() * &th.b + &aug.s10 * (aug.h10.transpose() * &th.b);
    let mean = (th.b.transpose() * &aug.h10 + state.x_at(1) / kappa + dz.transpose() * sis) / a;
    Ok((mean, &th.sigma / a))
}

/// Proposal for `D*` from the conditional with `Σ_η = κ Σ_g`.
pub fn dstar_proposal(state: &MvLatentState, table: &LookupTable) -> Result<MatrixNormalProposal> {
    let th = &state.theta_g;
    let aug = mv_augmented(table, state)?;
    let kappa = ratio(&state.sigma_eta, &th.sigma);
    let mu = mv_conditional_mean(table, &aug, &state.g_x10, &th.b);
    let sinv = aug.sigma.inverse();
    let mut lin = &sinv * mu;
    let mut prec = sinv;
    for (t, (u, w, c)) in transition_terms(state, table, kappa).into_iter().enumerate() {
        prec += &u * u.transpose() / c;
        let r = state.x_at(t + 2) - th.b.transpose() * &w;
        lin += &u * r.transpose() / c;
    }
    MatrixNormalProposal::from_precision(prec, lin, th.sigma.clone(), "D* proposal")
}

/// Inverse-Wishart independence proposal `(df, scale)` for one covariance.
pub fn cov_iw_proposal(
    kind: CovKind,
    state: &MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<(f64, DMatrix<f64>)> {
    let (nu, s0) = prior.cov_prior(kind);
    let horizon = state.horizon() as f64;
    let cond = prior.b_prior_scale == BPriorScale::Conditional;
    let b_term = |side: Side| -> Result<DMatrix<f64>> {
        let (b0, sb) = match side {
            Side::F => (&prior.b_f0, &prior.sigma_bf0),
            Side::G => (&prior.b_g0, &prior.sigma_bg0),
        };
        let r = &state.theta(side).b - b0;
        Ok(r.transpose() * Factor::cholesky(sb, "prior row covariance of B")?.solve_mat(&r) / prior.psi)
    };
    match kind {
        CovKind::F | CovKind::Eps => {
            let th = &state.theta_f;
            let points = mv_data_inputs(&state.x, y.len());
            let kappa = ratio(&state.sigma_eps, &th.sigma);
            let mut v = corr_matrix(&points, &th.smooth, DEFAULT_JITTER);
            let (scale_a, add) = if kind == CovKind::F {
                (1.0, kappa)
            } else {
                (1.0 / kappa, 1.0)
            };
            v *= scale_a;
            for i in 0..v.nrows() {
                v[(i, i)] += add;
            }
            let r = y.values() - design_matrix(&points) * &th.b;
            let mut s = s0 + r.transpose() * Factor::cholesky(&v, "covariance proposal")?.solve_mat(&r);
            let mut df = nu + horizon;
            if kind == CovKind::F && cond {
                s += b_term(Side::F)?;
                df += th.b.nrows() as f64;
            }
            Ok((df, symmetrize(&s)))
        }
        CovKind::G | CovKind::Eta => {
            let th = &state.theta_g;
            let aug = mv_augmented(table, state)?;
            let kappa = ratio(&state.sigma_eta, &th.sigma);
            let r10 = &state.g_x10 - th.b.transpose() * &aug.h10;
            let rd = &state.dstar - mv_conditional_mean(table, &aug, &state.g_x10, &th.b);
            let qd = &r10 * r10.transpose() + rd.transpose() * aug.sigma.solve_mat(&rd);
            let e1 = state.x_at(1) - &state.g_x10;
            let x1 = &e1 * e1.transpose();
            let w = mv_weights(table.system(), &state.dstar, &th.b);
            let mut trans = DMatrix::zeros(state.q(), state.q());
            for t in 1..=state.horizon() {
                let m = mv_transition(state, table, &w, t)?;
                let k = 1.0 - table.transition_term_at(&state.input(t + 1, t)).explained;
                let e = state.x_at(t + 1) - m.mean;
                let c = if kind == CovKind::G { k + kappa } else { k / kappa + 1.0 };
                trans += &e * e.transpose() / c;
            }
            let n = table.len() as f64;
            let mut df = nu + 2.0 + n + horizon;
            let mut s = if kind == CovKind::G {
                s0 + x1 / kappa + qd + trans
            } else {
                s0 + x1 + qd * kappa + trans
            };
            if kind == CovKind::G && cond {
                s += b_term(Side::G)?;
                df += th.b.nrows() as f64;
            }
            Ok((df, symmetrize(&s)))
        }
    }
}

/// Log full conditional of one covariance at `sigma`, up to a constant.
pub fn cov_log_target(
    kind: CovKind,
    sigma: &DMatrix<f64>,
    state: &MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<f64> {
    if Factor::cholesky(sigma, "covariance").is_err() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut st = state.clone();
    *st.cov_mut(kind) = sigma.clone();
    let mut lp = prior.log_cov_prior(kind, &st);
    let cond = prior.b_prior_scale == BPriorScale::Conditional;
    match kind {
        CovKind::F | CovKind::Eps => {
            lp += mv_loglik_data(y, &st.x, &st.theta_f, &st.sigma_eps)?;
            if kind == CovKind::F && cond {
                lp += prior.log_b_prior(Side::F, &st.theta_f)?;
            }
        }
        CovKind::G => {
            let aug = mv_augmented(table, &st)?;
            lp += mv_log_g_block(&st, table, &aug)? + mv_log_transitions(&st, table, 1..=st.horizon())?;
            if cond {
                lp += prior.log_b_prior(Side::G, &st.theta_g)?;
            }
        }
        CovKind::Eta => {
            lp += mv_log_x1(&st)? + mv_log_transitions(&st, table, 1..=st.horizon())?;
        }
    }
    Ok(lp)
}

/// `log` of the Jacobian `2^d Π c_ii^(d-i+1)` of `C -> C Cᵀ`.
pub fn log_cholesky_jacobian(c: &DMatrix<f64>) -> f64 {
    let d = c.nrows();
    d as f64 * std::f64::consts::LN_2 + (0..d).map(|i| (d - i) as f64 * c[(i, i)].ln()).sum::<f64>()
}

/// Random walk on the lower-triangular Cholesky factor of `sigma`. Returns the
/// proposed matrix and the log Jacobian ratio, or `None` if a diagonal entry is not positive.
pub fn cholesky_walk(sigma: &DMatrix<f64>, sd: f64, rng: &mut RngStream) -> Result<Option<(DMatrix<f64>, f64)>> {
    let c = Factor::cholesky(sigma, "covariance")?.l().clone();
    let d = c.nrows();
    let mut c2 = c.clone();
    for i in 0..d {
        for j in 0..=i {
            c2[(i, j)] += sd * rng.std_normal();
        }
    }
    if (0..d).any(|i| !(c2[(i, i)] > 0.0)) {
        return Ok(None);
    }
    let jac = log_cholesky_jacobian(&c2) - log_cholesky_jacobian(&c);
    Ok(Some((symmetrize(&(&c2 * c2.transpose())), jac)))
}

/// Metropolis-Hastings update of one covariance matrix.
pub fn mh_cov(
    kind: CovKind,
    state: &mut MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = state.cov(kind).clone();
    let (proposed, correction) = match config.cov_proposal {
        CovProposal::CholeskyWalk => match cholesky_walk(&current, config.rw_sd_chol, rng)? {
            Some(v) => v,
            None => return Ok(false),
        },
        CovProposal::InverseWishart => {
            let (df, scale) = cov_iw_proposal(kind, state, y, table, prior)?;
            let s = draw_inverse_wishart(df, &scale, rng)?;
            let q = logpdf_inverse_wishart_form(&current, df, &scale) - logpdf_inverse_wishart_form(&s, df, &scale);
            (s, q)
        }
    };
    let new = or_reject(cov_log_target(kind, &proposed, state, y, table, prior))?;
    let old = cov_log_target(kind, &current, state, y, table, prior)?;
    if accept(new - old + correction, rng) {
        *state.cov_mut(kind) = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Log full conditional of `B_f` or `B_g` at `b`.
pub fn b_log_target(
    side: Side,
    b: &DMatrix<f64>,
    state: &MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<f64> {
    let mut st = state.clone();
    st.theta_mut(side).b = b.clone();
    let lp = prior.log_b_prior(side, st.theta(side))?;
    Ok(lp
        + match side {
            Side::F => mv_loglik_data(y, &st.x, &st.theta_f, &st.sigma_eps)?,
            Side::G => {
                let aug = mv_augmented(table, &st)?;
                mv_log_g_block(&st, table, &aug)? + mv_log_transitions(&st, table, 1..=st.horizon())?
            }
        })
}

/// Log full conditional of `g₁₀` at `g`.
pub fn g_x10_log_target(g: &DVector<f64>, state: &MvLatentState, table: &LookupTable) -> Result<f64> {
    let mut st = state.clone();
    st.g_x10 = g.clone();
    let aug = mv_augmented(table, &st)?;
    Ok(mv_log_g_block(&st, table, &aug)? + mv_log_x1(&st)?)
}

/// Log full conditional of `D*` at `d`.
pub fn dstar_log_target(d: &DMatrix<f64>, state: &MvLatentState, table: &LookupTable) -> Result<f64> {
    let mut st = state.clone();
    st.dstar = d.clone();
    let aug = mv_augmented(table, &st)?;
    Ok(mv_log_g_block(&st, table, &aug)? + mv_log_transitions(&st, table, 1..=st.horizon())?)
}

/// One additive transformation: every entry moves by `+ξ` or `-ξ`.
pub fn additive_move(block: &DMatrix<f64>, xi: f64, signs: &[bool]) -> DMatrix<f64> {
    let mut out = block.clone();
    for (v, up) in out.iter_mut().zip(signs) {
        if *up {
            *v += xi;
        } else {
            *v -= xi;
        }
    }
    out
}

/// Draw `ξ ~ |N(0, var)|` and one sign per entry, and apply the move.
pub fn tmcmc_propose(block: &DMatrix<f64>, var: f64, rng: &mut RngStream) -> (DMatrix<f64>, f64, Vec<bool>) {
    let xi = (var.sqrt() * rng.std_normal()).abs();
    let signs: Vec<bool> = (0..block.len()).map(|_| rng.coin()).collect();
    (additive_move(block, xi, &signs), xi, signs)
}

/// Additive TMCMC step on a block with log target `target`. The move is
/// self-inverse with unit Jacobian, so the target ratio decides acceptance.
pub fn tmcmc_additive_block(
    block: &DMatrix<f64>,
    var: f64,
    target: impl Fn(&DMatrix<f64>) -> Result<f64>,
    rng: &mut RngStream,
) -> Result<Option<DMatrix<f64>>> {
    let (proposed, _, _) = tmcmc_propose(block, var, rng);
    let new = or_reject(target(&proposed))?;
    let old = target(block)?;
    Ok(accept(new - old, rng).then_some(proposed))
}

fn independence_step(
    current: &DMatrix<f64>,
    proposal: &MatrixNormalProposal,
    target: impl Fn(&DMatrix<f64>) -> Result<f64>,
    rng: &mut RngStream,
) -> Result<Option<DMatrix<f64>>> {
    let proposed = proposal.draw(rng)?;
    let new = or_reject(target(&proposed))?;
    let old = target(current)?;
    let q = proposal.log_density(current)? - proposal.log_density(&proposed)?;
    Ok(accept(new - old + q, rng).then_some(proposed))
}

/// Metropolis-Hastings update of `B_f` with the matrix-normal independence proposal.
pub fn mh_b_f(
    state: &mut MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
    rng: &mut RngStream,
) -> Result<bool> {
    let proposal = b_f_proposal(state, y, prior)?;
    let current = state.theta_f.b.clone();
    let target = |b: &DMatrix<f64>| b_log_target(Side::F, b, state, y, table, prior);
    match independence_step(&current, &proposal, target, rng)? {
        Some(b) => {
            state.theta_f.b = b;
            Ok(true)
        }
        None => Ok(false),
    }
}

pub fn mh_b_g(
    state: &mut MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = state.theta_g.b.clone();
    let target = |b: &DMatrix<f64>| b_log_target(Side::G, b, state, y, table, prior);
    let out = match config.g_block_proposal {
        GBlockProposal::Tmcmc => tmcmc_additive_block(&current, config.tmcmc_var, target, rng)?,
        GBlockProposal::Independence => {
            let proposal = b_g_proposal(state, table, prior)?;
            independence_step(&current, &proposal, target, rng)?
        }
    };
    Ok(match out {
        Some(b) => {
            state.theta_g.b = b;
            true
        }
        None => false,
    })
}

pub fn mh_g_x10(
    state: &mut MvLatentState,
    table: &LookupTable,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = DMatrix::from_column_slice(state.q(), 1, state.g_x10.as_slice());
    let target = |g: &DMatrix<f64>| g_x10_log_target(&g.column(0).into_owned(), state, table);
    let out = match config.g_block_proposal {
        GBlockProposal::Tmcmc => tmcmc_additive_block(&current, config.tmcmc_var, target, rng)?,
        GBlockProposal::Independence => {
            let (mean, cov) = g_x10_proposal(state, table)?;
            let proposal = MatrixNormalProposal {
                mean: DMatrix::from_column_slice(mean.len(), 1, mean.as_slice()),
                row: cov,
                col: DMatrix::identity(1, 1),
            };
            independence_step(&current, &proposal, target, rng)?
        }
    };
    Ok(match out {
        Some(g) => {
            state.g_x10 = g.column(0).into_owned();
            true
        }
        None => false,
    })
}

pub fn mh_dstar(
    state: &mut MvLatentState,
    table: &LookupTable,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = state.dstar.clone();
    let target = |d: &DMatrix<f64>| dstar_log_target(d, state, table);
    let out = match config.g_block_proposal {
        GBlockProposal::Tmcmc => tmcmc_additive_block(&current, config.tmcmc_var, target, rng)?,
        GBlockProposal::Independence => {
            let proposal = dstar_proposal(state, table)?;
            independence_step(&current, &proposal, target, rng)?
        }
    };
    Ok(match out {
        Some(d) => {
            state.dstar = d;
            true
        }
        None => false,
    })
}

/// Log full conditional of smoothness entry `i` at `r`; for `g`, `g_table` is built at `r`.
#[allow(clippy::too_many_arguments)]
pub fn mv_smoothness_log_target(
    side: Side,
    i: usize,
    r: f64,
    state: &MvLatentState,
    y: &MvObservedSeries,
    g_table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<f64> {
    if !(r > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut st = state.clone();
    let th = st.theta_mut(side);
    th.smooth = th.smooth.with(i, r)?;
    let lik = match side {
        Side::F => mv_loglik_data(y, &st.x, &st.theta_f, &st.sigma_eps)?,
        Side::G => {
            let aug = mv_augmented(g_table, &st)?;
            mv_log_g_block(&st, g_table, &aug)? + mv_log_transitions(&st, g_table, 1..=st.horizon())?
        }
    };
    Ok(prior.log_smooth_prior(side, i, r) + lik)
}

/// Random-walk update of one smoothness entry; for `g`, `table` is replaced on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn mh_mv_smoothness(
    side: Side,
    i: usize,
    state: &mut MvLatentState,
    y: &MvObservedSeries,
    grid: &Grid,
    table: &mut LookupTable,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let smooth: &Smoothness = &state.theta(side).smooth;
    let current = smooth.get(i);
    let proposed = current + config.rw_sd_smooth * rng.std_normal();
    if proposed <= 0.0 {
        return Ok(false);
    }
    let new_table = match side {
        Side::F => None,
        Side::G => match LookupTable::new(grid, &smooth.with(i, proposed)?) {
            Ok(t) => Some(t),
            Err(Error::Factorization { .. }) => return Ok(false),
            Err(e) => return Err(e),
        },
    };
    let new_tab = new_table.as_ref().unwrap_or(table);
    let new = or_reject(mv_smoothness_log_target(side, i, proposed, state, y, new_tab, prior))?;
    let old = mv_smoothness_log_target(side, i, current, state, y, table, prior)?;
    if accept(new - old, rng) {
        let th = state.theta_mut(side);
        th.smooth = th.smooth.with(i, proposed)?;
        if let Some(t) = new_table {
            *table = t;
        }
        Ok(true)
    } else {
        Ok(false)
    }
}

/// `log N_q(x₀; μ_x0, Σ_x0) + log[g₁₀, D* | x₀]` at `x₀ = x0`.
pub fn mv_x0_log_target(
    x0: &DVector<f64>,
    state: &MvLatentState,
    table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<f64> {
    let mut st = state.clone();
    st.set_x(0, x0);
    let aug = mv_augmented(table, &st)?;
    Ok(logpdf_mvn(x0, &prior.mu_x0, &prior.sigma_x0, "prior covariance of x0")? + mv_log_g_block(&st, table, &aug)?)
}

fn gaussian_step(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    current: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, f64)> {
    let p = draw_mvn(mean, cov, rng)?;
    let q = logpdf_mvn(current, mean, cov, "linearized proposal")? - logpdf_mvn(&p, mean, cov, "linearized proposal")?;
    Ok((p, q))
}

fn random_walk(current: &DVector<f64>, var: f64, rng: &mut RngStream) -> DVector<f64> {
    let sd = var.sqrt();
    DVector::from_iterator(current.len(), current.iter().map(|v| v + sd * rng.std_normal()))
}

pub fn mh_mv_x0(
    state: &mut MvLatentState,
    table: &LookupTable,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let current = state.x_at(0);
    let (proposed, q) = match config.x0_proposal {
        MvX0Proposal::RandomWalk => (random_walk(&current, config.rw_var_x0, rng), 0.0),
        MvX0Proposal::Linearized => {
            let (a, b) = state.theta_g.affine();
            let eta = Factor::cholesky(&state.sigma_eta, "Sigma_eta")?;
            let x0f = Factor::cholesky(&prior.sigma_x0, "prior covariance of x0")?;
            let k1 = DVector::from_row_slice(&[1.0, 1.0]);
            let prec = x0f.inverse() + b.transpose() * eta.solve_mat(&b);
            let lin = x0f.solve(&prior.mu_x0) + b.transpose() * eta.solve(&(state.x_at(1) - &a * k1));
            let pf = Factor::cholesky(&symmetrize(&prec), "x0 proposal")?;
            gaussian_step(&pf.solve(&lin), &symmetrize(&pf.inverse()), &current, rng)?
        }
    };
    let new = or_reject(mv_x0_log_target(&proposed, state, table, prior))?;
    let old = mv_x0_log_target(&current, state, table, prior)?;
    if accept(new - old + q, rng) {
        state.set_x(0, &proposed);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Transition into `x_t` (or `[x₁ | g₁₀]`) and out of it, at `x_t = xt`.
fn xt_latent_terms(
    t: usize,
    xt: &DVector<f64>,
    state: &MvLatentState,
    table: &LookupTable,
    w: &DMatrix<f64>,
) -> Result<f64> {
    let mut st = state.clone();
    st.set_x(t, xt);
    let back = if t == 1 {
        mv_log_x1(&st)?
    } else {
        let m = mv_transition(&st, table, w, t - 1)?;
        logpdf_mvn(xt, &m.mean, &m.cov, "transition covariance")?
    };
    let m = mv_transition(&st, table, w, t)?;
    Ok(back + logpdf_mvn(&st.x_at(t + 1), &m.mean, &m.cov, "transition covariance")?)
}

/// Full conditional of `x_t`, `1 <= t <= T`, at `xt`.
pub fn mv_xt_log_target(
    t: usize,
    xt: &DVector<f64>,
    state: &MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
) -> Result<f64> {
    let w = mv_weights(table.system(), &state.dstar, &state.theta_g.b);
    let mut st = state.clone();
    st.set_x(t, xt);
    Ok(xt_latent_terms(t, xt, state, table, &w)? + mv_loglik_data(y, &st.x, &st.theta_f, &st.sigma_eps)?)
}

/// Update of `x_t`; `data` holds the current data log-likelihood and is refreshed on acceptance.
#[allow(clippy::too_many_arguments)]
pub fn mh_mv_xt(
    t: usize,
    state: &mut MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    weights: &DMatrix<f64>,
    data: &mut f64,
    config: &MvProposalConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let horizon = state.horizon();
    if t == 0 || t > horizon {
        return Err(Error::invalid(format!("x_{t} is not updated by mh_mv_xt")));
    }
    let current = state.x_at(t);
    let (proposed, q) = match config.x_proposal {
        MvXProposal::RandomWalk => (random_walk(&current, config.rw_var_x, rng), 0.0),
        MvXProposal::Tmcmc => {
            let block = DMatrix::from_column_slice(current.len(), 1, current.as_slice());
            let (p, _, _) = tmcmc_propose(&block, config.tmcmc_var, rng);
            (p.column(0).into_owned(), 0.0)
        }
        MvXProposal::Linearized => {
            let (ag, bg) = state.theta_g.affine();
            let (af, bf) = state.theta_f.affine();
            let eta = Factor::cholesky(&state.sigma_eta, "Sigma_eta")?;
            let eps = Factor::cholesky(&state.sigma_eps, "Sigma_eps")?;
            let tt = t as f64;
            let k = |s: f64| DVector::from_row_slice(&[1.0, s]);
            let prec = eta.inverse() + bg.transpose() * eta.solve_mat(&bg) + bf.transpose() * eps.solve_mat(&bf);
            // x₁ is centred on g(1, x₀) exactly; later states use the linear part of g.
            let back = if t == 1 {
                state.g_x10.clone()
            } else {
                &ag * k(tt) + &bg * state.x_at(t - 1)
            };
            let lin = eta.solve(&back)
                + bg.transpose() * eta.solve(&(state.x_at(t + 1) - &ag * k(tt + 1.0)))
                + bf.transpose() * eps.solve(&(y.row(t) - &af * k(tt)));
            let pf = Factor::cholesky(&symmetrize(&prec), "x_t proposal")?;
            gaussian_step(&pf.solve(&lin), &symmetrize(&pf.inverse()), &current, rng)?
        }
    };
    let latent_new = or_reject(xt_latent_terms(t, &proposed, state, table, weights))?;
    let latent_old = xt_latent_terms(t, &current, state, table, weights)?;
    let mut st = state.clone();
    st.set_x(t, &proposed);
    let data_new = or_reject(mv_loglik_data(y, &st.x, &st.theta_f, &st.sigma_eps))?;
    if accept(latent_new - latent_old + data_new - *data + q, rng) {
        *state = st;
        *data = data_new;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Exact draw of `x_{T+1}` from its transition.
pub fn gibbs_mv_x_next(state: &mut MvLatentState, table: &LookupTable, rng: &mut RngStream) -> Result<()> {
    let horizon = state.horizon();
    let w = mv_weights(table.system(), &state.dstar, &state.theta_g.b);
    let m = mv_transition(state, table, &w, horizon)?;
    let x = draw_mvn(&m.mean, &m.cov, rng)?;
    state.set_x(horizon + 1, &x);
    Ok(())
}
