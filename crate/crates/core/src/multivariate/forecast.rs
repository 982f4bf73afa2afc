//! Predictive draws from a multivariate chain.

use nalgebra::DVector;

use super::chain::{mv_initial_state, MvChainOutput, MvSampler};
use super::mh::gibbs_mv_x_next;
use super::model::{mv_data_inputs, mv_moments_with_weights, mv_weights, MvLatentState, MvObservedSeries, MvPriorSpec};
use super::MvProposalConfig;
use crate::error::{Error, Result};
use crate::inference::{KStepOptions, StageStart};
use crate::kernel::{Grid, KrigingSystem};
use crate::model::LookupTable;
use crate::rng::RngStream;
use crate::stats::draw_mvn;

fn one_step_draw(state: &MvLatentState, y: &MvObservedSeries, rng: &mut RngStream) -> Result<DVector<f64>> {
    let horizon = y.len();
    if state.horizon() != horizon {
        return Err(Error::invalid("state and series lengths differ"));
    }
    let sys = KrigingSystem::new(
        mv_data_inputs(&state.x, horizon),
        state.theta_f.smooth.clone(),
        "multivariate data correlation",
    )?;
    let w = mv_weights(&sys, y.values(), &state.theta_f.b);
    let m = mv_moments_with_weights(
        &sys,
        &state.input(horizon + 1, horizon + 1),
        &w,
        &state.theta_f,
        &state.sigma_eps,
    )?;
    draw_mvn(&m.mean, &m.cov, rng)
}

/// One draw of `y_{T+1}` per retained state; draw `i` uses `rng.substream(i)`.
pub fn mv_forecast_one_step(chain: &MvChainOutput, y: &MvObservedSeries, rng: &RngStream) -> Result<Vec<DVector<f64>>> {
    chain
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| one_step_draw(s, y, &mut rng.substream(i as u64)))
        .collect()
}

/// Successive-augmentation forecasts of `y_{T+1}..y_{T+k}`, one row per trajectory.
#[allow(clippy::too_many_arguments)]
pub fn mv_forecast_k_step(
    chain: &MvChainOutput,
    y: &MvObservedSeries,
    grid: &Grid,
    prior: &MvPriorSpec,
    config: &MvProposalConfig,
    k: usize,
    options: &KStepOptions,
    rng: &RngStream,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if k == 0 {
        return Err(Error::invalid("forecast horizon k must be at least 1"));
    }
    if options.max_trajectories == 0 {
        return Err(Error::invalid("max_trajectories must be at least 1"));
    }
    let n = chain.len();
    let picks: Vec<usize> = if n <= options.max_trajectories {
        (0..n).collect()
    } else {
        (0..options.max_trajectories)
            .map(|i| i * n / options.max_trajectories)
            .collect()
    };
    let mut out = Vec::with_capacity(picks.len());
    for i in picks {
        let mut r = rng.substream(i as u64);
        let mut state = chain.states[i].clone();
        let mut series = y.clone();
        let mut draws = vec![one_step_draw(&state, &series, &mut r)?];
        for _ in 1..k {
            series = series.appended(draws.last().expect("at least one draw"))?;
            state = match options.start {
                StageStart::Warm => {
                    let mut st = state.clone();
                    let rows = st.x.nrows();
                    st.x = st.x.insert_row(rows, 0.0);
                    let table = LookupTable::new(grid, &st.theta_g.smooth)?;
                    gibbs_mv_x_next(&mut st, &table, &mut r)?;
                    st
                }
                StageStart::Cold => mv_initial_state(&series, grid, prior)?,
            };
            let mut sampler = MvSampler::new(state, series.clone(), grid.clone(), prior.clone(), config.clone())?;
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
