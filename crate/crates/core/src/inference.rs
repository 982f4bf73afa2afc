//! Posterior predictive quantities computed from retained draws.

use crate::diagnostics::quantile;
use crate::error::{Error, Result};
use crate::kernel::{Grid, InputPoint, KrigingSystem};
use crate::mcmc::{initial_state, run_chain, ChainOutput, ProposalConfig, Sampler};
use crate::model::{data_inputs, LatentState, LookupTable, ObservedSeries, PriorSpec};
use crate::rng::RngStream;
use crate::stats::{draw_normal, hpd_interval, HpdInterval};

/// Default cap on the number of trajectories for k-step forecasts.
pub const MAX_TRAJECTORIES: usize = 500;

/// Kriging system for `f` on the data inputs of `state`.
fn data_system(state: &LatentState, horizon: usize) -> Result<KrigingSystem> {
    KrigingSystem::new(
        data_inputs(&state.x, horizon),
        state.theta_f.smooth.clone(),
        "data correlation",
    )
}

/// One draw of `y_{T+1}` from `state`: kriging at `(T+1, x_{T+1})` on the observed data.
fn one_step_draw(state: &LatentState, y: &ObservedSeries, rng: &mut RngStream) -> Result<f64> {
    let horizon = y.len();
    if state.horizon() != horizon {
        return Err(Error::invalid("state and series lengths differ"));
    }
    let sys = data_system(state, horizon)?;
    let th = &state.theta_f;
    let w = sys.weights(y.values(), &th.beta);
    let z = InputPoint::scalar((horizon + 1) as f64, state.x[horizon + 1]);
    let m = sys.moments_with_weights(&z, &w, &th.beta, th.sigma2, state.s2_eps)?;
    draw_normal(m.mean, m.var.sqrt(), rng)
}

/// One draw of `y_{T+1}` per retained state; draw `i` uses `rng.substream(i)`.
pub fn forecast_one_step(chain: &ChainOutput, y: &ObservedSeries, rng: &RngStream) -> Result<Vec<f64>> {
    chain
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| one_step_draw(s, y, &mut rng.substream(i as u64)))
        .collect()
}

/// How the inner chain of a k-step forecast is started at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStart {
    /// Continue from the trajectory's current state.
    Warm,
    /// Restart from the deterministic initial state of the augmented series.
    Cold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KStepOptions {
    pub inner_iters: usize,
    pub max_trajectories: usize,
    pub start: StageStart,
}

impl Default for KStepOptions {
    fn default() -> Self {
        Self {
            inner_iters: 1,
            max_trajectories: MAX_TRAJECTORIES,
            start: StageStart::Warm,
        }
    }
}

/// Evenly spaced indices into `0..n`, at most `cap` of them.
fn subsample(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Extend the latent path by one step, drawing the new state from its transition.
fn extend_state(state: &LatentState, table: &LookupTable, rng: &mut RngStream) -> Result<LatentState> {
    let horizon = state.horizon();
    let mut st = state.clone();
    st.x = st.x.clone().insert_row(horizon + 2, 0.0);
    let m = table.transition(&st, horizon + 1)?;
    st.x[horizon + 2] = draw_normal(m.mean, m.var.sqrt(), rng)?;
    Ok(st)
}

/// Forecasts of `y_{T+1}, …, y_{T+k}` by successive augmentation.
///
/// Each trajectory starts from one retained state. At stage `j` the drawn
/// `y_{T+j}` is appended to the data, the latent path is extended by one step,
/// `inner_iters` sweeps are run on the augmented series, and `y_{T+j+1}` is drawn.
/// Returns one row of `k` values per trajectory.
#[allow(clippy::too_many_arguments)]
pub fn forecast_k_step(
    chain: &ChainOutput,
    y: &ObservedSeries,
    grid: &Grid,
    prior: &PriorSpec,
    config: &ProposalConfig,
    k: usize,
    options: &KStepOptions,
    rng: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::invalid("forecast horizon k must be at least 1"));
    }
    if options.max_trajectories == 0 {
        return Err(Error::invalid("max_trajectories must be at least 1"));
    }
    let mut out = Vec::new();
    for i in subsample(chain.len(), options.max_trajectories) {
        let mut r = rng.substream(i as u64);
        let mut state = chain.states[i].clone();
        let mut series = y.clone();
        let mut draws = vec![one_step_draw(&state, &series, &mut r)?];
        for _ in 1..k {
            series = series.appended(*draws.last().expect("at least one draw"))?;
            let table = LookupTable::new(grid, &state.theta_g.smooth)?;
            state = match options.start {
                StageStart::Warm => extend_state(&state, &table, &mut r)?,
                StageStart::Cold => initial_state(&series, grid, prior)?,
            };
            let mut sampler = Sampler::new(state, series.clone(), grid.clone(), prior.clone(), config.clone())?;
            for _ in 0..options.inner_iters {
                sampler.sweep(&mut r)?;
            }
            state = sampler.state().clone();
            draws.push(one_step_draw(&state, &series, &mut r)?);
        }
        out.push(draws);
    }
    Ok(out)
}

/// Posterior of `x_{T+1}` once `y_{T+1}` is observed: refit on the augmented series.
#[allow(clippy::too_many_arguments)]
pub fn filter_next(
    y: &ObservedSeries,
    y_next: f64,
    grid: &Grid,
    prior: &PriorSpec,
    config: &ProposalConfig,
    iters: usize,
    burnin: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<(ChainOutput, Vec<f64>)> {
    let augmented = y.appended(y_next)?;
    let chain = run_chain(&augmented, grid, prior, config, iters, burnin, thin, rng)?;
    let t = y.len() + 1;
    let draws = chain.draws(|s| s.x[t]);
    Ok((chain, draws))
}

/// Draws of `x_{T-k}` from the retained states.
pub fn retrospect(chain: &ChainOutput, k: usize) -> Result<Vec<f64>> {
    let horizon = chain.horizon();
    if k > horizon {
        return Err(Error::invalid(format!("x_(T-{k}) does not exist for T = {horizon}")));
    }
    Ok(chain.draws(|s| s.x[horizon - k]))
}

/// Range of abscissae for composite functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompositeWindow {
    /// Central 95% interval of the posterior of `x₀`.
    Posterior,
    /// Explicit window; may extend beyond the support of the data.
    Override { lo: f64, hi: f64 },
}

impl CompositeWindow {
    pub fn resolve(&self, chain: &ChainOutput) -> Result<(f64, f64)> {
        match *self {
            CompositeWindow::Posterior => {
                let x0 = chain.draws(|s| s.x[0]);
                Ok((quantile(&x0, 0.025)?, quantile(&x0, 0.975)?))
            }
            CompositeWindow::Override { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::invalid(format!("composite window [{lo}, {hi}] is empty")));
                }
                Ok((lo, hi))
            }
        }
    }
}

/// Draws of `g*_t(x)` and `f*_t(x)` for `t = 1..t_max` at each abscissa.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeDraws {
    pub abscissae: Vec<f64>,
    /// `g[t-1][a]` holds one draw per retained state.
    pub g: Vec<Vec<Vec<f64>>>,
    pub f: Vec<Vec<Vec<f64>>>,
}

impl CompositeDraws {
    pub fn t_max(&self) -> usize {
        self.g.len()
    }

    /// Pointwise HPD intervals of `g*_t` (or `f*_t` when `observation` is set).
    pub fn bands(&self, t: usize, observation: bool, mass: f64) -> Result<Vec<HpdInterval>> {
        if t == 0 || t > self.t_max() {
            return Err(Error::invalid(format!(
                "composite index {t} outside 1..={}",
                self.t_max()
            )));
        }
        let src = if observation { &self.f } else { &self.g };
        src[t - 1].iter().map(|d| hpd_interval(d, mass)).collect()
    }
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn abscissae(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    // The last point is `hi` itself; the formula can overshoot it by rounding.
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Composite evolution and observation functions.
///
/// `g*₀(x) = x`, `g*_t(x) = g(t, g*_{t-1}(x))` drawn from the kriging predictive
/// given the look-up table, and `f*_t(x) = f(t, g*_t(x))` drawn from the kriging
/// predictive given the data. State `i` uses `rng.substream(i)`.
pub fn composite_posterior(
    chain: &ChainOutput,
    y: &ObservedSeries,
    t_max: usize,
    xs: &[f64],
    window: CompositeWindow,
    rng: &RngStream,
) -> Result<CompositeDraws> {
    if t_max == 0 || xs.is_empty() {
        return Err(Error::invalid("composites need t_max >= 1 and at least one abscissa"));
    }
    let (lo, hi) = window.resolve(chain)?;
    if let Some(x) = xs.iter().find(|x| !(lo..=hi).contains(*x)) {
        return Err(Error::invalid(format!(
            "abscissa {x} lies outside the composite window [{lo}, {hi}]"
        )));
    }
    let horizon = y.len();
    let mut g = vec![vec![Vec::with_capacity(chain.len()); xs.len()]; t_max];
    let mut f = g.clone();
    let mut table: Option<LookupTable> = None;
    for (i, st) in chain.states.iter().enumerate() {
        let mut r = rng.substream(i as u64);
        if table
            .as_ref()
            .is_none_or(|tb| tb.system().smooth() != &st.theta_g.smooth)
        {
            table = Some(LookupTable::new(&chain.grid, &st.theta_g.smooth)?);
        }
        let tb = table.as_ref().expect("built above");
        let gw = tb.system().weights(&st.dstar, &st.theta_g.beta);
        let fsys = data_system(st, horizon)?;
        let fw = fsys.weights(y.values(), &st.theta_f.beta);
        for (a, x) in xs.iter().enumerate() {
            let mut prev = *x;
            for t in 1..=t_max {
                let zg = InputPoint::scalar(t as f64, prev);
                let mg = tb
                    .system()
                    .moments_with_weights(&zg, &gw, &st.theta_g.beta, st.theta_g.sigma2, 0.0)?;
                let gt = draw_normal(mg.mean, mg.var.sqrt(), &mut r)?;
                let zf = InputPoint::scalar(t as f64, gt);
                let mf = fsys.moments_with_weights(&zf, &fw, &st.theta_f.beta, st.theta_f.sigma2, 0.0)?;
                let ft = draw_normal(mf.mean, mf.var.sqrt(), &mut r)?;
                g[t - 1][a].push(gt);
                f[t - 1][a].push(ft);
                prev = gt;
            }
        }
    }
    Ok(CompositeDraws {
        abscissae: xs.to_vec(),
        g,
        f,
    })
}

/// Pointwise HPD intervals for a set of draws per coordinate.
pub fn pointwise_hpd(draws: &[Vec<f64>], mass: f64) -> Result<Vec<HpdInterval>> {
    draws.iter().map(|d| hpd_interval(d, mass)).collect()
}

/// Draws of every latent state `x_0..x_{T+1}`, one vector per time index.
pub fn latent_path_draws(chain: &ChainOutput) -> Vec<Vec<f64>> {
    let len = chain.horizon() + 2;
    (0..len).map(|t| chain.draws(|s| s.x[t])).collect()
}
