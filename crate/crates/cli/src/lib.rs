//! Command-line driver: data simulation, model fitting, forecasting and summaries.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};

/// Stream ids derived from the run seed; chains use ids `0..chains`, so a fit
/// never reuses the stream that simulated its data even when the seeds agree.
pub mod streams {
    pub const GRID: u64 = u64::MAX;
    pub const FORECAST: u64 = u64::MAX - 1;
    pub const COMPOSITE: u64 = u64::MAX - 2;
    pub const SIMULATE: u64 = u64::MAX - 3;
}

#[derive(Debug, Parser)]
#[command(
    name = "gpssm",
    version,
    about = "Gaussian-process state-space models fitted by MCMC"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic series and its truth file.
    Simulate(SimulateArgs),
    /// Run the sampler on a series.
    Fit(FitArgs),
    /// Predictive draws and bands from a fitted run.
    Forecast(ForecastArgs),
    /// Posterior summaries of a samples file.
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// Data drawn from the Gaussian-process model itself.
    Gp,
    /// Linear Gaussian state-space model.
    Linear,
    /// Nonstationary growth model.
    Cps,
    /// Four-coordinate growth model.
    Cps4,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Generator,
    /// Number of observations available for fitting.
    #[arg(long = "T", value_name = "T")]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of extra time points kept out of the fit file.
    #[arg(long, default_value_t = 1)]
    pub holdout: usize,
    /// Grid size used by the `gp` generator.
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = -30.0, allow_negative_numbers = true)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    pub grid_hi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub hpd: Option<f64>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Forecast horizon; defaults to `forecast_k` of the fit.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write composite-function bands for `t = 1..=t_max` (univariate only).
    #[arg(long, value_name = "T_MAX")]
    pub composite: Option<usize>,
    /// Truth file from `simulate`, for coverage scoring.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Defaults to the seed of the fit.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hpd: Option<f64>,
    /// Sweeps between successive augmentations.
    #[arg(long, default_value_t = 1)]
    pub inner_iters: usize,
    #[arg(long, default_value_t = gpssm_core::inference::MAX_TRAJECTORIES)]
    pub max_trajectories: usize,
    /// Restart every augmentation stage from the deterministic initial state.
    #[arg(long)]
    pub cold: bool,
    /// Number of evenly spaced composite abscissae.
    #[arg(long, default_value_t = 41)]
    pub abscissae: usize,
    /// Composite window; defaults to the central 95% of the `x₀` posterior.
    #[arg(long, allow_negative_numbers = true, requires = "window_hi")]
    pub window_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "window_lo")]
    pub window_hi: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub hpd: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Forecast(a) => commands::forecast::run(a),
        Command::Summarize(a) => commands::summarize::run(a),
    }
}
