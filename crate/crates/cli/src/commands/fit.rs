//! `fit`: run the sampler and write draws, summaries and diagnostics.

use nalgebra::DMatrix;

use gpssm_core::kernel::Grid;
use gpssm_core::mcmc::{run_chain, Block, ChainOutput};
use gpssm_core::model::{LatentState, ObservedSeries};
use gpssm_core::multivariate::{mv_run_chain, MvBlock, MvChainOutput, MvLatentState, MvObservedSeries};
use gpssm_core::RngStream;

use super::{header, summary_row, SUMMARY_HEADER};
use crate::config::{ModelSpec, RunConfig, Settings};
use crate::error::{CliError, Result};
use crate::io::{fmt_f, read_series, series_header, OutputDir};
use crate::{streams, FitArgs};

/// Chains of a fit, in chain order.
#[derive(Clone, Debug)]
pub enum Fitted {
    Univariate(Vec<ChainOutput>),
    Multivariate(Vec<MvChainOutput>),
}

impl Fitted {
    /// State columns of `samples.csv`.
    pub fn column_names(&self, horizon: usize, n: usize, p: usize) -> Vec<String> {
        match self {
            Fitted::Univariate(_) => LatentState::column_names(horizon, n),
            Fitted::Multivariate(c) => {
                let q = c[0].grid.dim();
                MvLatentState::column_names(horizon, n, p, q)
            }
        }
    }

    /// `(chain, rows)` for every retained draw.
    pub fn rows(&self) -> Vec<(usize, Vec<Vec<f64>>)> {
        match self {
            Fitted::Univariate(cs) => cs
                .iter()
                .enumerate()
                .map(|(k, c)| (k, c.states.iter().map(LatentState::to_row).collect()))
                .collect(),
            Fitted::Multivariate(cs) => cs
                .iter()
                .enumerate()
                .map(|(k, c)| (k, c.states.iter().map(MvLatentState::to_row).collect()))
                .collect(),
        }
    }

    fn log_joints(&self) -> Vec<&[f64]> {
        match self {
            Fitted::Univariate(cs) => cs.iter().map(|c| c.log_joint.as_slice()).collect(),
            Fitted::Multivariate(cs) => cs.iter().map(|c| c.log_joint.as_slice()).collect(),
        }
    }

    /// `(chain, block, accepted, attempted, rate)`.
    fn acceptance_rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        match self {
            Fitted::Univariate(cs) => {
                for (k, c) in cs.iter().enumerate() {
                    for (i, b) in Block::ALL.iter().enumerate() {
                        let a = &c.acceptance;
                        out.push(vec![
                            k.to_string(),
                            b.name().to_string(),
                            a.accepted[i].to_string(),
                            a.attempted[i].to_string(),
                            fmt_f(a.rate(*b)),
                        ]);
                    }
                }
            }
            Fitted::Multivariate(cs) => {
                for (k, c) in cs.iter().enumerate() {
                    for (i, b) in MvBlock::ALL.iter().enumerate() {
                        let a = &c.acceptance;
                        out.push(vec![
                            k.to_string(),
                            b.name().to_string(),
                            a.accepted[i].to_string(),
                            a.attempted[i].to_string(),
                            fmt_f(a.rate(*b)),
                        ]);
                    }
                }
            }
        }
        out
    }
}

/// The look-up table design points of a run.
pub fn build_grid(cfg: &RunConfig) -> Result<Grid> {
    let mut rng = RngStream::new(cfg.seed, streams::GRID);
    Ok(Grid::stratified(
        cfg.n,
        cfg.model.q(),
        cfg.grid_lo,
        cfg.grid_hi,
        &mut rng,
    )?)
}

/// Runs `cfg.chains` chains in parallel; chain `k` uses stream `k` of the seed.
pub fn fit(y: &DMatrix<f64>, grid: &Grid, cfg: &RunConfig) -> Result<Fitted> {
    let chains = 0..cfg.chains as u64;
    match &cfg.model {
        ModelSpec::Univariate { prior, proposal } => {
            let series = ObservedSeries::new(y.column(0).iter().copied().collect())?;
            let out = std::thread::scope(|s| {
                let handles: Vec<_> = chains
                    .map(|k| {
                        let series = &series;
                        s.spawn(move || {
                            let mut rng = RngStream::new(cfg.seed, k);
                            run_chain(series, grid, prior, proposal, cfg.iters, cfg.burnin, cfg.thin, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect::<Vec<_>>()
            });
            Ok(Fitted::Univariate(out.into_iter().collect::<gpssm_core::Result<_>>()?))
        }
        ModelSpec::Multivariate { prior, proposal, .. } => {
            let series = MvObservedSeries::new(y.clone())?;
            let out = std::thread::scope(|s| {
                let handles: Vec<_> = chains
                    .map(|k| {
                        let series = &series;
                        s.spawn(move || {
                            let mut rng = RngStream::new(cfg.seed, k);
                            mv_run_chain(series, grid, prior, proposal, cfg.iters, cfg.burnin, cfg.thin, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect::<Vec<_>>()
            });
            Ok(Fitted::Multivariate(
                out.into_iter().collect::<gpssm_core::Result<_>>()?,
            ))
        }
    }
}

/// Config file, then dedicated flags, then `--set` pairs.
pub fn settings(args: &FitArgs) -> Result<Settings> {
    let mut s = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags: [(&str, Option<String>); 11] = [
        ("iters", args.iters.map(|v| v.to_string())),
        ("burnin", args.burnin.map(|v| v.to_string())),
        ("thin", args.thin.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("chains", args.chains.map(|v| v.to_string())),
        ("n", args.n.map(|v| v.to_string())),
        ("model", args.model.clone()),
        ("q", args.q.map(|v| v.to_string())),
        ("grid_lo", args.grid_lo.map(|v| v.to_string())),
        ("grid_hi", args.grid_hi.map(|v| v.to_string())),
        ("hpd_mass", args.hpd.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s.set(k, v);
        }
    }
    for pair in &args.set {
        s.set_pair(pair)?;
    }
    Ok(s)
}

pub fn grid_header(q: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=q).map(|j| format!("x{j}")))
        .collect()
}

/// Writes every output file of a finished fit into `out`. `manifest` holds the
/// resolved settings, echoed verbatim into `manifest.txt`.
pub fn write_outputs(
    out: &mut OutputDir,
    y: &DMatrix<f64>,
    grid: &Grid,
    cfg: &RunConfig,
    manifest: &[(String, String)],
    fitted: &Fitted,
) -> Result<()> {
    let (horizon, p) = (y.nrows(), y.ncols());
    out.write_key_values("manifest.txt", manifest)?;

    out.write_csv(
        "data.csv",
        &series_header(p),
        (0..horizon).map(|t| {
            std::iter::once((t + 1).to_string())
                .chain(y.row(t).iter().map(|v| fmt_f(*v)))
                .collect()
        }),
    )?;
    out.write_csv("grid.csv", &grid_header(grid.dim()), super::simulate::grid_rows(grid))?;

    let names = fitted.column_names(horizon, grid.len(), p);
    let rows = fitted.rows();
    let mut samples_header = header(&["chain", "draw"]);
    samples_header.extend(names.iter().cloned());
    out.write_csv(
        "samples.csv",
        &samples_header,
        rows.iter().flat_map(|(k, rs)| {
            rs.iter().enumerate().map(move |(d, r)| {
                [k.to_string(), d.to_string()]
                    .into_iter()
                    .chain(r.iter().map(|v| fmt_f(*v)))
                    .collect()
            })
        }),
    )?;

    let summary = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let draws: Vec<f64> = rows.iter().flat_map(|(_, rs)| rs.iter().map(move |r| r[j])).collect();
            summary_row(name, &draws, cfg.hpd_mass)
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_csv("summary.csv", &header(&SUMMARY_HEADER), summary)?;

    out.write_csv(
        "diagnostics.csv",
        &header(&["chain", "iter", "log_joint"]),
        fitted.log_joints().into_iter().enumerate().flat_map(|(k, lj)| {
            lj.iter()
                .enumerate()
                .map(move |(i, v)| vec![k.to_string(), (i + 1).to_string(), fmt_f(*v)])
        }),
    )?;
    out.write_csv(
        "acceptance.csv",
        &header(&["chain", "block", "accepted", "attempted", "rate"]),
        fitted.acceptance_rows(),
    )?;
    Ok(())
}

pub fn run(args: &FitArgs) -> Result<()> {
    let y = read_series(&args.data)?;
    let settings = settings(args)?;
    let (cfg, manifest) = RunConfig::resolve(&settings, y.ncols())?;
    if y.nrows() < 2 {
        return Err(CliError::Usage(format!(
            "{}: need at least 2 observations",
            args.data.display()
        )));
    }
    let grid = build_grid(&cfg)?;
    log::info!(
        "fitting T = {}, p = {}, q = {}, n = {} with {} chain(s)",
        y.nrows(),
        y.ncols(),
        cfg.model.q(),
        cfg.n,
        cfg.chains
    );
    let fitted = fit(&y, &grid, &cfg)?;
    let mut pairs = vec![
        ("data".to_string(), args.data.display().to_string()),
        ("out".to_string(), args.out.display().to_string()),
    ];
    pairs.extend(manifest);
    let mut out = OutputDir::create(&args.out)?;
    write_outputs(&mut out, &y, &grid, &cfg, &pairs, &fitted)?;
    out.finish();
    Ok(())
}
