//! `forecast`: predictive draws, bands and coverage from a fitted run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use gpssm_core::inference::{
    abscissae, composite_posterior, forecast_k_step, forecast_one_step, CompositeWindow, KStepOptions, StageStart,
};
use gpssm_core::kernel::{Grid, InputPoint};
use gpssm_core::mcmc::{AcceptanceStats, ChainOutput};
use gpssm_core::model::{GrowthGenerator, LatentState, LinearGenerator, ObservedSeries};
use gpssm_core::multivariate::{
    mv_forecast_k_step, mv_forecast_one_step, MvAcceptanceStats, MvChainOutput, MvLatentState, MvObservedSeries,
};
use gpssm_core::RngStream;

use super::{header, moments};
use crate::config::{ModelSpec, RunConfig, Settings};
use crate::error::{CliError, Result};
use crate::io::{fmt_f, read_key_values, read_series, read_table, OutputDir, Table};
use crate::{streams, ForecastArgs};

/// A fit read back from its output directory, with all chains pooled.
pub struct LoadedFit {
    pub cfg: RunConfig,
    pub y: DMatrix<f64>,
    pub grid: Grid,
    pub draws: Pooled,
}

pub enum Pooled {
    Univariate(ChainOutput),
    Multivariate(MvChainOutput),
}

fn read_grid(path: &Path) -> Result<Grid> {
    let table = read_table(path)?;
    let q = table.header.len().saturating_sub(1);
    if q == 0 || table.header[0] != "t" {
        return Err(CliError::parse(path, 1, "header must be t,x1,…,xq"));
    }
    let points = table
        .rows
        .iter()
        .map(|r| InputPoint::new(r[0], r[1..].to_vec()))
        .collect();
    Ok(Grid::new(points)?)
}

/// State rows of `samples.csv`, with the `chain` and `draw` columns dropped.
fn state_rows(path: &Path, table: &Table, expected: &[String]) -> Result<Vec<Vec<f64>>> {
    let names: Vec<&String> = table.header.iter().skip(2).collect();
    if table.header.len() < 2
        || table.header[0] != "chain"
        || table.header[1] != "draw"
        || names.into_iter().ne(expected.iter())
    {
        return Err(CliError::parse(path, 1, "columns do not match the fitted model"));
    }
    if table.rows.is_empty() {
        return Err(CliError::parse(path, 2, "no draws"));
    }
    Ok(table.rows.iter().map(|r| r[2..].to_vec()).collect())
}

/// Reads `manifest.txt`, `data.csv`, `grid.csv` and `samples.csv` of a fit.
pub fn load_fit(dir: &Path) -> Result<LoadedFit> {
    let y = read_series(&dir.join("data.csv"))?;
    let settings = Settings::from_file(&dir.join("manifest.txt"))?;
    let (cfg, _) = RunConfig::resolve(&settings, y.ncols())?;
    let grid = read_grid(&dir.join("grid.csv"))?;
    if grid.len() != cfg.n || grid.dim() != cfg.model.q() {
        return Err(CliError::Usage(format!(
            "{}: grid does not match the manifest",
            dir.display()
        )));
    }
    let samples_path = dir.join("samples.csv");
    let table = read_table(&samples_path)?;
    let (horizon, p, q, n) = (y.nrows(), y.ncols(), grid.dim(), grid.len());
    let draws = match cfg.model {
        ModelSpec::Univariate { .. } => {
            let rows = state_rows(&samples_path, &table, &LatentState::column_names(horizon, n))?;
            let states = rows
                .iter()
                .map(|r| LatentState::from_row(r, horizon, n))
                .collect::<gpssm_core::Result<Vec<_>>>()?;
            Pooled::Univariate(ChainOutput {
                states,
                log_joint: Vec::new(),
                acceptance: AcceptanceStats::default(),
                grid: grid.clone(),
                seed: cfg.seed,
                stream_id: 0,
                iters: cfg.iters,
                burnin: cfg.burnin,
                thin: cfg.thin,
            })
        }
        ModelSpec::Multivariate { .. } => {
            let rows = state_rows(&samples_path, &table, &MvLatentState::column_names(horizon, n, p, q))?;
            let states = rows
                .iter()
                .map(|r| MvLatentState::from_row(r, horizon, n, p, q))
                .collect::<gpssm_core::Result<Vec<_>>>()?;
            Pooled::Multivariate(MvChainOutput {
                states,
                log_joint: Vec::new(),
                acceptance: MvAcceptanceStats::default(),
                grid: grid.clone(),
                seed: cfg.seed,
                stream_id: 0,
                iters: cfg.iters,
                burnin: cfg.burnin,
                thin: cfg.thin,
            })
        }
    };
    Ok(LoadedFit { cfg, y, grid, draws })
}

/// `draws[d][j]` holds trajectory `d`'s forecast of `y_{T+j+1}` as a `p`-vector.
pub fn forecast_draws(
    fit: &LoadedFit,
    k: usize,
    options: &KStepOptions,
    rng: &RngStream,
) -> Result<Vec<Vec<Vec<f64>>>> {
    match (&fit.draws, &fit.cfg.model) {
        (Pooled::Univariate(chain), ModelSpec::Univariate { prior, proposal }) => {
            let y = ObservedSeries::new(fit.y.column(0).iter().copied().collect())?;
            let out = if k == 1 {
                forecast_one_step(chain, &y, rng)?
                    .into_iter()
                    .map(|v| vec![v])
                    .collect()
            } else {
                forecast_k_step(chain, &y, &fit.grid, prior, proposal, k, options, rng)?
            };
            Ok(out
                .into_iter()
                .map(|tr| tr.into_iter().map(|v| vec![v]).collect())
                .collect())
        }
        (Pooled::Multivariate(chain), ModelSpec::Multivariate { prior, proposal, .. }) => {
            let y = MvObservedSeries::new(fit.y.clone())?;
            let out = if k == 1 {
                mv_forecast_one_step(chain, &y, rng)?
                    .into_iter()
                    .map(|v| vec![v])
                    .collect()
            } else {
                mv_forecast_k_step(chain, &y, &fit.grid, prior, proposal, k, options, rng)?
            };
            Ok(out
                .into_iter()
                .map(|tr| tr.into_iter().map(|v| v.iter().copied().collect()).collect())
                .collect())
        }
        _ => unreachable!("pooled draws follow the model kind"),
    }
}

/// The noise-free composite functions of a known generator.
enum TrueComposite {
    Linear(LinearGenerator),
    Growth(GrowthGenerator),
}

impl TrueComposite {
    fn read(path: &Path) -> Result<Option<Self>> {
        let kv: BTreeMap<String, (String, usize)> = read_key_values(path)?
            .into_iter()
            .map(|(k, v, line)| (k, (v, line)))
            .collect();
        let num = |key: &str| -> Result<f64> {
            let (v, line) = kv.get(key).ok_or_else(|| CliError::Config {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("missing key '{key}'"),
            })?;
            v.parse().map_err(|_| CliError::Config {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("'{v}' is not a number"),
            })
        };
        Ok(match kv.get("model").map(|(v, _)| v.as_str()) {
            Some("linear") => Some(TrueComposite::Linear(LinearGenerator {
                a0: num("a0")?,
                a1: num("a1")?,
                b0: num("b0")?,
                b1: num("b1")?,
                sd_u: num("sd_u")?,
                sd_v: num("sd_v")?,
                x0: num("x0_1")?,
            })),
            Some("cps") => Some(TrueComposite::Growth(GrowthGenerator {
                alpha: num("alpha")?,
                beta: num("beta")?,
                gamma: num("gamma")?,
                sd_u: num("sd_u")?,
                sd_v: num("sd_v")?,
                x0: num("x0_1")?,
            })),
            _ => None,
        })
    }

    /// `(g*_t(x), f*_t(x))` for `t = 1..=t_max`.
    fn path(&self, x: f64, t_max: usize) -> Vec<(f64, f64)> {
        let mut prev = x;
        (1..=t_max)
            .map(|t| {
                let (g, f) = match self {
                    TrueComposite::Linear(m) => {
                        let g = m.evolution(prev);
                        (g, m.observation(g))
                    }
                    TrueComposite::Growth(m) => {
                        let g = m.evolution(t, prev);
                        (g, m.observation(g))
                    }
                };
                prev = g;
                (g, f)
            })
            .collect()
    }
}

fn truth_values(path: &Path, p: usize) -> Result<BTreeMap<usize, Vec<f64>>> {
    let table = read_table(path)?;
    let t_col = table
        .column("t")
        .ok_or_else(|| CliError::parse(path, 1, "missing column t"))?;
    let cols = (1..=p)
        .map(|j| {
            table
                .column(&format!("y{j}"))
                .ok_or_else(|| CliError::parse(path, 1, format!("missing column y{j}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r[t_col] as usize, cols.iter().map(|c| r[*c]).collect()))
        .collect())
}

fn hit(v: f64, lo: f64, hi: f64) -> String {
    if lo.is_nan() || hi.is_nan() {
        "NaN".into()
    } else {
        ((lo <= v && v <= hi) as u8).to_string()
    }
}

pub fn run(args: &ForecastArgs) -> Result<()> {
    let fit = load_fit(&args.fit)?;
    let k = args.k.unwrap_or(fit.cfg.forecast_k);
    if k == 0 {
        return Err(CliError::option("k", "must be at least 1"));
    }
    let mass = args.hpd.unwrap_or(fit.cfg.hpd_mass);
    if !(mass > 0.0 && mass < 1.0) {
        return Err(CliError::option("hpd", "must lie in (0, 1)"));
    }
    let seed = args.seed.unwrap_or(fit.cfg.seed);
    let composite_generator = match (&args.composite, &args.truth) {
        (Some(_), _) if !matches!(fit.draws, Pooled::Univariate(_)) => {
            return Err(CliError::option("composite", "only available for the univariate model"));
        }
        (Some(0), _) => return Err(CliError::option("composite", "T_MAX must be at least 1")),
        (Some(_), Some(truth)) => {
            let gen_path: PathBuf = truth.with_file_name("generator.txt");
            if gen_path.exists() {
                TrueComposite::read(&gen_path)?
            } else {
                None
            }
        }
        _ => None,
    };
    if args.composite.is_some() && args.abscissae == 0 {
        return Err(CliError::option("abscissae", "must be at least 1"));
    }
    let (horizon, p) = (fit.y.nrows(), fit.y.ncols());
    let truth = match &args.truth {
        Some(path) => {
            let t = truth_values(path, p)?;
            if let Some(missing) = (horizon + 1..=horizon + k).find(|t_| !t.contains_key(t_)) {
                return Err(CliError::Usage(format!(
                    "{}: no truth row for t = {missing}",
                    path.display()
                )));
            }
            Some(t)
        }
        None => None,
    };

    let options = KStepOptions {
        inner_iters: args.inner_iters,
        max_trajectories: args.max_trajectories,
        start: if args.cold { StageStart::Cold } else { StageStart::Warm },
    };
    let draws = forecast_draws(&fit, k, &options, &RngStream::new(seed, streams::FORECAST))?;

    let mut y_cols = vec!["draw".to_string(), "t".to_string()];
    y_cols.extend((1..=p).map(|j| format!("y{j}")));
    let mut summary = Vec::new();
    let mut coverage = Vec::new();
    for j in 0..k {
        let t = horizon + j + 1;
        for c in 0..p {
            let xs: Vec<f64> = draws.iter().map(|d| d[j][c]).collect();
            let [mean, sd, lo, hi] = moments(&xs, mass)?;
            summary.push(vec![
                t.to_string(),
                (c + 1).to_string(),
                fmt_f(mean),
                fmt_f(sd),
                fmt_f(lo),
                fmt_f(hi),
            ]);
            if let Some(truth) = &truth {
                let v = truth[&t][c];
                coverage.push(vec![
                    t.to_string(),
                    (c + 1).to_string(),
                    fmt_f(v),
                    fmt_f(lo),
                    fmt_f(hi),
                    hit(v, lo, hi),
                ]);
            }
        }
    }

    let composite_rows = match (&args.composite, &fit.draws) {
        (Some(t_max), Pooled::Univariate(chain)) => {
            let window = match (args.window_lo, args.window_hi) {
                (Some(lo), Some(hi)) => CompositeWindow::Override { lo, hi },
                _ => CompositeWindow::Posterior,
            };
            let (lo, hi) = window.resolve(chain)?;
            let xs = abscissae(lo, hi, args.abscissae);
            let y = ObservedSeries::new(fit.y.column(0).iter().copied().collect())?;
            let comp = composite_posterior(
                chain,
                &y,
                *t_max,
                &xs,
                window,
                &RngStream::new(seed, streams::COMPOSITE),
            )?;
            let truth_paths: Option<Vec<Vec<(f64, f64)>>> = composite_generator
                .as_ref()
                .map(|g| xs.iter().map(|x| g.path(*x, *t_max)).collect());
            let mut rows = Vec::new();
            for t in 1..=*t_max {
                for (kind, src) in [("g", &comp.g), ("f", &comp.f)] {
                    for (a, x) in xs.iter().enumerate() {
                        let [mean, _, lo, hi] = moments(&src[t - 1][a], mass)?;
                        let mut row = vec![
                            t.to_string(),
                            kind.to_string(),
                            fmt_f(*x),
                            fmt_f(mean),
                            fmt_f(lo),
                            fmt_f(hi),
                        ];
                        if let Some(tp) = &truth_paths {
                            let (g, f) = tp[a][t - 1];
                            let v = if kind == "g" { g } else { f };
                            row.push(fmt_f(v));
                            row.push(hit(v, lo, hi));
                        }
                        rows.push(row);
                    }
                }
            }
            Some((truth_paths.is_some(), rows))
        }
        _ => None,
    };

    let mut out = OutputDir::create(&args.out)?;
    out.write_csv(
        "forecast_draws.csv",
        &y_cols,
        draws.iter().enumerate().flat_map(|(d, tr)| {
            tr.iter().enumerate().map(move |(j, v)| {
                [d.to_string(), (horizon + j + 1).to_string()]
                    .into_iter()
                    .chain(v.iter().map(|x| fmt_f(*x)))
                    .collect()
            })
        }),
    )?;
    out.write_csv(
        "forecast_summary.csv",
        &header(&["t", "coord", "mean", "sd", "hpd_lo", "hpd_hi"]),
        summary,
    )?;
    if truth.is_some() {
        out.write_csv(
            "coverage.csv",
            &header(&["t", "coord", "truth", "hpd_lo", "hpd_hi", "hit"]),
            coverage,
        )?;
    }
    if let Some((with_truth, rows)) = composite_rows {
        let mut cols = header(&["t", "kind", "x", "mean", "hpd_lo", "hpd_hi"]);
        if with_truth {
            cols.extend(header(&["truth", "hit"]));
        }
        out.write_csv("composite.csv", &cols, rows)?;
    }
    out.finish();
    Ok(())
}
