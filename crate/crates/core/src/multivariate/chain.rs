//! Sweeps and chains of the multivariate sampler.

use nalgebra::{DMatrix, DVector};

use super::mh::{gibbs_mv_x_next, mh_b_f, mh_b_g, mh_cov, mh_dstar, mh_g_x10, mh_mv_smoothness, mh_mv_x0, mh_mv_xt};
use super::model::{
    mv_augmented, mv_conditional_mean, mv_log_posterior, mv_loglik_data, mv_weights, CovKind, MvGpParams,
    MvLatentState, MvObservedSeries, MvPriorSpec, Side,
};
use super::MvProposalConfig;
use crate::error::{Error, Result};
use crate::kernel::{Grid, Smoothness};
use crate::model::LookupTable;
use crate::rng::RngStream;

/// Blocks tracked in the acceptance statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvBlock {
    BF,
    BG,
    SigmaF,
    SigmaG,
    SigmaEps,
    SigmaEta,
    /// All smoothness entries of `f` pooled.
    SmoothF,
    SmoothG,
    GX10,
    DStar,
    X0,
    /// All of `x_1..x_T` pooled.
    X,
}

impl MvBlock {
    pub const ALL: [MvBlock; 12] = [
        MvBlock::BF,
        MvBlock::BG,
        MvBlock::SigmaF,
        MvBlock::SigmaG,
        MvBlock::SigmaEps,
        MvBlock::SigmaEta,
        MvBlock::SmoothF,
        MvBlock::SmoothG,
        MvBlock::GX10,
        MvBlock::DStar,
        MvBlock::X0,
        MvBlock::X,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MvBlock::BF => "B_f",
            MvBlock::BG => "B_g",
            MvBlock::SigmaF => "Sigma_f",
            MvBlock::SigmaG => "Sigma_g",
            MvBlock::SigmaEps => "Sigma_eps",
            MvBlock::SigmaEta => "Sigma_eta",
            MvBlock::SmoothF => "r_f",
            MvBlock::SmoothG => "r_g",
            MvBlock::GX10 => "g_x10",
            MvBlock::DStar => "dstar",
            MvBlock::X0 => "x_0",
            MvBlock::X => "x_1..x_T",
        }
    }

    fn index(self) -> usize {
        MvBlock::ALL.iter().position(|b| *b == self).expect("listed")
    }

    fn of_cov(kind: CovKind) -> MvBlock {
        match kind {
            CovKind::F => MvBlock::SigmaF,
            CovKind::G => MvBlock::SigmaG,
            CovKind::Eps => MvBlock::SigmaEps,
            CovKind::Eta => MvBlock::SigmaEta,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MvAcceptanceStats {
    pub accepted: [u64; 12],
    pub attempted: [u64; 12],
}

impl MvAcceptanceStats {
    fn record(&mut self, block: MvBlock, accepted: bool) {
        let i = block.index();
        self.attempted[i] += 1;
        self.accepted[i] += accepted as u64;
    }

    pub fn merge(&mut self, other: &MvAcceptanceStats) {
        for i in 0..12 {
            self.accepted[i] += other.accepted[i];
            self.attempted[i] += other.attempted[i];
        }
    }

    pub fn rate(&self, block: MvBlock) -> f64 {
        let i = block.index();
        if self.attempted[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.attempted[i] as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvSweepDiagnostics {
    pub acceptance: MvAcceptanceStats,
    pub log_joint: f64,
}

#[derive(Clone, Debug)]
pub struct MvSampler {
    y: MvObservedSeries,
    grid: Grid,
    prior: MvPriorSpec,
    config: MvProposalConfig,
    state: MvLatentState,
    table: LookupTable,
}

impl MvSampler {
    pub fn new(
        state: MvLatentState,
        y: MvObservedSeries,
        grid: Grid,
        prior: MvPriorSpec,
        config: MvProposalConfig,
    ) -> Result<Self> {
        prior.validate()?;
        config.validate()?;
        if prior.p() != y.dim() {
            return Err(Error::invalid(format!(
                "prior is for p = {}, data has p = {}",
                prior.p(),
                y.dim()
            )));
        }
        if prior.q() != grid.dim() {
            return Err(Error::invalid(format!(
                "prior is for q = {}, grid has q = {}",
                prior.q(),
                grid.dim()
            )));
        }
        state.validate(&y, &grid)?;
        let table = LookupTable::new(&grid, &state.theta_g.smooth)?;
        Ok(Self {
            y,
            grid,
            prior,
            config,
            state,
            table,
        })
    }

    pub fn state(&self) -> &MvLatentState {
        &self.state
    }

    pub fn series(&self) -> &MvObservedSeries {
        &self.y
    }

    pub fn log_joint(&self) -> Result<f64> {
        mv_log_posterior(&self.state, &self.y, &self.table, &self.prior)
    }

    /// One scan in the univariate order, with matrix-valued blocks.
    pub fn sweep(&mut self, rng: &mut RngStream) -> Result<MvSweepDiagnostics> {
        let mut acc = MvAcceptanceStats::default();
        let (y, grid, prior, config) = (&self.y, &self.grid, &self.prior, &self.config);
        let state = &mut self.state;
        let table = &mut self.table;

        let ok = mh_b_f(state, y, table, prior, rng)?;
        acc.record(MvBlock::BF, ok);
        let ok = mh_b_g(state, y, table, prior, config, rng)?;
        acc.record(MvBlock::BG, ok);
        for kind in CovKind::ALL {
            let ok = mh_cov(kind, state, y, table, prior, config, rng)?;
            acc.record(MvBlock::of_cov(kind), ok);
        }
        for (side, block) in [(Side::F, MvBlock::SmoothF), (Side::G, MvBlock::SmoothG)] {
            for i in 0..state.q() + 1 {
                let ok = mh_mv_smoothness(side, i, state, y, grid, table, prior, config, rng)?;
                acc.record(block, ok);
            }
        }
        let ok = mh_g_x10(state, table, config, rng)?;
        acc.record(MvBlock::GX10, ok);
        let ok = mh_dstar(state, table, config, rng)?;
        acc.record(MvBlock::DStar, ok);
        let ok = mh_mv_x0(state, table, prior, config, rng)?;
        acc.record(MvBlock::X0, ok);
        let weights = mv_weights(table.system(), &state.dstar, &state.theta_g.b);
        let mut data = mv_loglik_data(y, &state.x, &state.theta_f, &state.sigma_eps)?;
        for t in 1..=state.horizon() {
            let ok = mh_mv_xt(t, state, y, table, &weights, &mut data, config, rng)?;
            acc.record(MvBlock::X, ok);
        }
        gibbs_mv_x_next(state, table, rng)?;
        Ok(MvSweepDiagnostics {
            acceptance: acc,
            log_joint: self.log_joint()?,
        })
    }
}

/// Deterministic starting point, mirroring the univariate one: coefficients at the
/// prior means, covariances at their prior centers, unit smoothness, the path from
/// the linear part of the evolution mean, and `g₁₀`, `D*` at their conditional means.
pub fn mv_initial_state(y: &MvObservedSeries, grid: &Grid, prior: &MvPriorSpec) -> Result<MvLatentState> {
    prior.validate()?;
    let (p, q) = (y.dim(), grid.dim());
    if prior.p() != p || prior.q() != q {
        return Err(Error::invalid("prior dimensions do not match the data and grid"));
    }
    let horizon = y.len();
    let gp = |b0: &DMatrix<f64>, kind: CovKind| -> Result<MvGpParams> {
        let (nu, s0) = prior.cov_prior(kind);
        Ok(MvGpParams {
            b: b0.clone(),
            sigma: MvPriorSpec::cov_center(nu, s0),
            smooth: Smoothness::uniform(1.0, q + 1)?,
        })
    };
    let theta_f = gp(&prior.b_f0, CovKind::F)?;
    let theta_g = gp(&prior.b_g0, CovKind::G)?;
    let (a, b) = theta_g.affine();
    let k = |t: f64| DVector::from_row_slice(&[1.0, t]);
    let mut x = DMatrix::zeros(horizon + 2, q);
    x.row_mut(0).copy_from(&prior.mu_x0.transpose());
    for t in 1..=horizon + 1 {
        let prev = x.row(t - 1).transpose();
        let next = &a * k(t as f64) + &b * prev;
        x.row_mut(t).copy_from(&next.transpose());
    }
    let g_x10 = &a * k(1.0) + &b * &prior.mu_x0;
    let (nu_eps, s_eps) = prior.cov_prior(CovKind::Eps);
    let (nu_eta, s_eta) = prior.cov_prior(CovKind::Eta);
    let mut state = MvLatentState {
        x,
        g_x10,
        dstar: DMatrix::zeros(grid.len(), q),
        theta_f,
        theta_g,
        sigma_eps: MvPriorSpec::cov_center(nu_eps, s_eps),
        sigma_eta: MvPriorSpec::cov_center(nu_eta, s_eta),
    };
    let table = LookupTable::new(grid, &state.theta_g.smooth)?;
    let aug = mv_augmented(&table, &state)?;
    state.dstar = mv_conditional_mean(&table, &aug, &state.g_x10, &state.theta_g.b);
    Ok(state)
}

/// Retained draws and diagnostics of one multivariate chain.
#[derive(Clone, Debug)]
pub struct MvChainOutput {
    pub states: Vec<MvLatentState>,
    pub log_joint: Vec<f64>,
    pub acceptance: MvAcceptanceStats,
    pub grid: Grid,
    pub seed: u64,
    pub stream_id: u64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl MvChainOutput {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn draws(&self, f: impl Fn(&MvLatentState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, |s| s.horizon())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mv_run_chain_from(
    init: MvLatentState,
    y: &MvObservedSeries,
    grid: &Grid,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    iters: usize,
    burnin: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<MvChainOutput> {
    if thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    if burnin >= iters {
        return Err(Error::invalid(format!(
            "burnin {burnin} leaves no draws out of {iters} iterations"
        )));
    }
    let mut sampler = MvSampler::new(init, y.clone(), grid.clone(), prior.clone(), config.clone())?;
    let mut states = Vec::with_capacity((iters - burnin) / thin);
    let mut log_joint = Vec::with_capacity(iters);
    let mut acceptance = MvAcceptanceStats::default();
    for i in 0..iters {
        let d = sampler.sweep(rng)?;
        log_joint.push(d.log_joint);
        acceptance.merge(&d.acceptance);
        if i >= burnin && (i - burnin + 1).is_multiple_of(thin) {
            states.push(sampler.state().clone());
        }
    }
    Ok(MvChainOutput {
        states,
        log_joint,
        acceptance,
        grid: grid.clone(),
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        iters,
        burnin,
        thin,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn mv_run_chain(
    y: &MvObservedSeries,
    grid: &Grid,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    iters: usize,
    burnin: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<MvChainOutput> {
    let init = mv_initial_state(y, grid, prior)?;
    mv_run_chain_from(init, y, grid, prior, config, iters, burnin, thin, rng)
}
