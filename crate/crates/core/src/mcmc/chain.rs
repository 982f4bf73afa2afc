//! Sweeps and chains.

use nalgebra::DVector;

use super::data_cache::DataCache;
use super::gibbs::{gibbs_beta_f, gibbs_beta_g, gibbs_dstar, gibbs_g_x10, gibbs_x_next};
use super::mh::{mh_shift, mh_smoothness, mh_variance, mh_x0, mh_xt, GpSide, VarianceKind};
use super::ProposalConfig;
use crate::error::{Error, Result};
use crate::kernel::{GpParams, Grid, Smoothness};
use crate::model::{log_posterior, LatentState, LookupTable, ObservedSeries, PriorSpec};
use crate::rng::RngStream;

/// Metropolis-Hastings blocks tracked in the acceptance statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Sigma2F,
    Sigma2G,
    Sigma2Eps,
    Sigma2Eta,
    SmoothF1,
    SmoothF2,
    SmoothG1,
    SmoothG2,
    X0,
    /// All of `x_1..x_T` pooled.
    X,
    /// Path translation move.
    Shift,
}

impl Block {
    pub const ALL: [Block; 11] = [
        Block::Sigma2F,
        Block::Sigma2G,
        Block::Sigma2Eps,
        Block::Sigma2Eta,
        Block::SmoothF1,
        Block::SmoothF2,
        Block::SmoothG1,
        Block::SmoothG2,
        Block::X0,
        Block::X,
        Block::Shift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Sigma2F => "sigma2_f",
            Block::Sigma2G => "sigma2_g",
            Block::Sigma2Eps => "sigma2_eps",
            Block::Sigma2Eta => "sigma2_eta",
            Block::SmoothF1 => "r_f_1",
            Block::SmoothF2 => "r_f_2",
            Block::SmoothG1 => "r_g_1",
            Block::SmoothG2 => "r_g_2",
            Block::X0 => "x_0",
            Block::X => "x_1..x_T",
            Block::Shift => "shift",
        }
    }

    fn index(self) -> usize {
        Block::ALL.iter().position(|b| *b == self).expect("listed")
    }
}

/// Accepted and attempted moves per block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AcceptanceStats {
    pub accepted: [u64; Block::ALL.len()],
    pub attempted: [u64; Block::ALL.len()],
}

impl AcceptanceStats {
    fn record(&mut self, block: Block, accepted: bool) {
        let i = block.index();
        self.attempted[i] += 1;
        self.accepted[i] += accepted as u64;
    }

    pub fn merge(&mut self, other: &AcceptanceStats) {
        for i in 0..Block::ALL.len() {
            self.accepted[i] += other.accepted[i];
            self.attempted[i] += other.attempted[i];
        }
    }

    pub fn rate(&self, block: Block) -> f64 {
        let i = block.index();
        if self.attempted[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.attempted[i] as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepDiagnostics {
    pub acceptance: AcceptanceStats,
    /// Unnormalized log posterior after the sweep.
    pub log_joint: f64,
}

/// Sampler state: the current draw plus the factored look-up table for its `r_g`.
#[derive(Clone, Debug)]
pub struct Sampler {
    y: ObservedSeries,
    grid: Grid,
    prior: PriorSpec,
    config: ProposalConfig,
    state: LatentState,
    table: LookupTable,
}

impl Sampler {
    pub fn new(
        state: LatentState,
        y: ObservedSeries,
        grid: Grid,
        prior: PriorSpec,
        config: ProposalConfig,
    ) -> Result<Self> {
        prior.validate()?;
        config.validate()?;
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

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn series(&self) -> &ObservedSeries {
        &self.y
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    /// Replace the observations (same length), keeping the state.
    pub fn set_series(&mut self, y: ObservedSeries) -> Result<()> {
        if y.len() != self.y.len() {
            return Err(Error::invalid("replacement series has a different length"));
        }
        self.y = y;
        Ok(())
    }

    pub fn log_joint(&self) -> Result<f64> {
        log_posterior(&self.state, &self.y, &self.table, &self.prior)
    }

    /// One full scan; returns per-block acceptance and the log posterior afterwards.
    pub fn sweep(&mut self, rng: &mut RngStream) -> Result<SweepDiagnostics> {
        let mut acc = AcceptanceStats::default();
        let (y, grid, prior, config) = (&self.y, &self.grid, &self.prior, &self.config);
        let state = &mut self.state;
        let table = &mut self.table;

        gibbs_beta_f(state, y, prior, rng)?;
        gibbs_beta_g(state, table, prior, rng)?;
        for (kind, block) in [
            (VarianceKind::F, Block::Sigma2F),
            (VarianceKind::G, Block::Sigma2G),
            (VarianceKind::Eps, Block::Sigma2Eps),
            (VarianceKind::Eta, Block::Sigma2Eta),
        ] {
            let ok = mh_variance(kind, state, y, table, prior, config, rng)?;
            acc.record(block, ok);
        }
        for (side, i, block) in [
            (GpSide::F, 0, Block::SmoothF1),
            (GpSide::F, 1, Block::SmoothF2),
            (GpSide::G, 0, Block::SmoothG1),
            (GpSide::G, 1, Block::SmoothG2),
        ] {
            let ok = mh_smoothness(side, i, state, y, grid, table, prior, config, rng)?;
            acc.record(block, ok);
        }
        gibbs_g_x10(state, table, rng)?;
        gibbs_dstar(state, table, rng)?;
        let ok = mh_x0(state, table, prior, config, rng)?;
        acc.record(Block::X0, ok);
        let weights = table.system().weights(&state.dstar, &state.theta_g.beta);
        let mut cache = DataCache::new(state, y)?;
        for t in 1..=state.horizon() {
            let ok = mh_xt(t, state, y, table, &weights, &mut cache, config, rng)?;
            acc.record(Block::X, ok);
        }
        gibbs_x_next(state, table, rng)?;
        if let Some(ok) = mh_shift(state, table, prior, config, rng)? {
            acc.record(Block::Shift, ok);
        }
        Ok(SweepDiagnostics {
            acceptance: acc,
            log_joint: self.log_joint()?,
        })
    }
}

/// Deterministic starting point: coefficients at their prior means, variances at
/// their prior means, unit smoothness, the latent path from the linear part of the
/// evolution mean, and `g₁₀`, `D*` at their conditional prior means.
pub fn initial_state(y: &ObservedSeries, grid: &Grid, prior: &PriorSpec) -> Result<LatentState> {
    prior.validate()?;
    let horizon = y.len();
    let gp = |beta: &DVector<f64>, alpha: f64, gamma: f64| -> Result<GpParams> {
        Ok(GpParams {
            beta: beta.clone(),
            sigma2: PriorSpec::variance_center(alpha, gamma),
            smooth: Smoothness::uniform(1.0, 2)?,
        })
    };
    let theta_f = gp(&prior.beta_f0, prior.alpha_f, prior.gamma_f)?;
    let theta_g = gp(&prior.beta_g0, prior.alpha_g, prior.gamma_g)?;
    let b = &theta_g.beta;
    let mut x = DVector::zeros(horizon + 2);
    x[0] = prior.mu_x0;
    for t in 1..=horizon + 1 {
        x[t] = b[0] + b[1] * t as f64 + b[2] * x[t - 1];
    }
    let g_x10 = b[0] + b[1] + b[2] * x[0];
    let table = LookupTable::new(grid, &theta_g.smooth)?;
    let aug = table.augmented(x[0])?;
    let dstar = table.conditional_mean(&aug, g_x10, b);
    Ok(LatentState {
        x,
        g_x10,
        dstar,
        theta_f,
        theta_g,
        s2_eps: PriorSpec::variance_center(prior.alpha_eps, prior.gamma_eps),
        s2_eta: PriorSpec::variance_center(prior.alpha_eta, prior.gamma_eta),
    })
}

/// Retained draws and diagnostics of one chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub states: Vec<LatentState>,
    /// Log posterior after every sweep, burn-in included.
    pub log_joint: Vec<f64>,
    pub acceptance: AcceptanceStats,
    pub grid: Grid,
    pub seed: u64,
    pub stream_id: u64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// One scalar per retained draw.
    pub fn draws(&self, f: impl Fn(&LatentState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, |s| s.horizon())
    }
}

fn check_schedule(iters: usize, burnin: usize, thin: usize) -> Result<()> {
    if thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    if burnin >= iters {
        return Err(Error::invalid(format!(
            "burnin {burnin} leaves no draws out of {iters} iterations"
        )));
    }
    Ok(())
}

/// Run `iters` sweeps from `init`, keeping every `thin`-th draw after `burnin`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_from(
    init: LatentState,
    y: &ObservedSeries,
    grid: &Grid,
    prior: &PriorSpec,
    config: &ProposalConfig,
    iters: usize,
    burnin: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    check_schedule(iters, burnin, thin)?;
    let mut sampler = Sampler::new(init, y.clone(), grid.clone(), prior.clone(), config.clone())?;
    let mut states = Vec::with_capacity((iters - burnin) / thin);
    let mut log_joint = Vec::with_capacity(iters);
    let mut acceptance = AcceptanceStats::default();
    for i in 0..iters {
        let d = sampler.sweep(rng)?;
        log_joint.push(d.log_joint);
        acceptance.merge(&d.acceptance);
        if i >= burnin && (i - burnin + 1).is_multiple_of(thin) {
            states.push(sampler.state().clone());
        }
    }
    Ok(ChainOutput {
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
pub fn run_chain(
    y: &ObservedSeries,
    grid: &Grid,
    prior: &PriorSpec,
    config: &ProposalConfig,
    iters: usize,
    burnin: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    let init = initial_state(y, grid, prior)?;
    run_chain_from(init, y, grid, prior, config, iters, burnin, thin, rng)
}
