//! `simulate`: synthetic series plus a separate truth file.
//!
//! Writes `series.csv` (the first `T` observations, the only file a fit should
//! see), `truth.csv` (latent path and all observations for `t = 1..T+holdout`,
//! with held-out rows flagged) and `generator.txt` (generator parameters and `x₀`).

use nalgebra::DMatrix;

use gpssm_core::kernel::Grid;
use gpssm_core::model::{simulate_gp_model, GpTruth, GrowthGenerator, LinearGenerator};
use gpssm_core::multivariate::Cps4Generator;
use gpssm_core::RngStream;

use crate::error::{CliError, Result};
use crate::io::{fmt_f, series_header, OutputDir};
use crate::{streams, Generator, SimulateArgs};

/// A simulated path: `x` has rows `x_0..x_N`, `y` has rows `y_1..y_N`.
pub struct Simulated {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub params: Vec<(String, String)>,
    pub grid: Option<Grid>,
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn kv(k: &str, v: f64) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Simulates `len` observations from the named generator.
pub fn generate(args: &SimulateArgs, len: usize) -> Result<Simulated> {
    let mut rng = RngStream::new(args.seed, streams::SIMULATE);
    // Each generator simulates one point beyond its horizon argument.
    let horizon = len - 1;
    Ok(match args.model {
        Generator::Linear => {
            let g = LinearGenerator::default();
            let s = g.simulate(horizon, &mut rng)?;
            Simulated {
                x: column(&s.x),
                y: column(&s.y),
                params: vec![
                    kv("a0", g.a0),
                    kv("a1", g.a1),
                    kv("b0", g.b0),
                    kv("b1", g.b1),
                    kv("sd_u", g.sd_u),
                    kv("sd_v", g.sd_v),
                ],
                grid: None,
            }
        }
        Generator::Cps => {
            let g = GrowthGenerator::default();
            let s = g.simulate(horizon, &mut rng)?;
            Simulated {
                x: column(&s.x),
                y: column(&s.y),
                params: vec![
                    kv("alpha", g.alpha),
                    kv("beta", g.beta),
                    kv("gamma", g.gamma),
                    kv("sd_u", g.sd_u),
                    kv("sd_v", g.sd_v),
                ],
                grid: None,
            }
        }
        Generator::Cps4 => {
            let g = Cps4Generator::default();
            let s = g.simulate(horizon, &mut rng)?;
            Simulated {
                x: s.x,
                y: s.y,
                params: vec![
                    kv("alpha", g.alpha),
                    kv("beta", g.beta),
                    kv("gamma", g.gamma),
                    kv("var_u", g.var_u),
                    kv("var_v", g.var_v),
                ],
                grid: None,
            }
        }
        Generator::Gp => {
            let truth = GpTruth::default();
            let grid = Grid::stratified(
                args.n,
                1,
                args.grid_lo,
                args.grid_hi,
                &mut RngStream::new(args.seed, streams::GRID),
            )?;
            let s = simulate_gp_model(&truth, &grid, horizon, &mut rng)?.series;
            let mut params = Vec::new();
            for (side, th) in [("f", &truth.theta_f), ("g", &truth.theta_g)] {
                for (i, b) in th.beta.iter().enumerate() {
                    params.push(kv(&format!("beta_{side}_{}", i + 1), *b));
                }
                params.push(kv(&format!("sigma2_{side}"), th.sigma2));
                for (i, r) in th.smooth.as_slice().iter().enumerate() {
                    params.push(kv(&format!("r_{side}_{}", i + 1), *r));
                }
            }
            params.push(kv("s2_eps", truth.s2_eps));
            params.push(kv("s2_eta", truth.s2_eta));
            Simulated {
                x: column(&s.x),
                y: column(&s.y),
                params,
                grid: Some(grid),
            }
        }
    })
}

pub fn model_name(g: Generator) -> &'static str {
    match g {
        Generator::Gp => "gp",
        Generator::Linear => "linear",
        Generator::Cps => "cps",
        Generator::Cps4 => "cps4",
    }
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    if args.horizon == 0 {
        return Err(CliError::option("T", "must be at least 1"));
    }
    if args.holdout == 0 {
        return Err(CliError::option("holdout", "must be at least 1"));
    }
    let total = args.horizon + args.holdout;
    let sim = generate(args, total)?;
    let (p, q) = (sim.y.ncols(), sim.x.ncols());

    let mut out = OutputDir::create(&args.out)?;
    out.write_csv(
        "series.csv",
        &series_header(p),
        (1..=args.horizon).map(|t| {
            std::iter::once(t.to_string())
                .chain(sim.y.row(t - 1).iter().map(|v| fmt_f(*v)))
                .collect()
        }),
    )?;

    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|j| format!("x{j}")));
    header.extend((1..=p).map(|j| format!("y{j}")));
    header.push("held_out".to_string());
    out.write_csv(
        "truth.csv",
        &header,
        (1..=total).map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(sim.x.row(t).iter().map(|v| fmt_f(*v)));
            row.extend(sim.y.row(t - 1).iter().map(|v| fmt_f(*v)));
            row.push(((t > args.horizon) as u8).to_string());
            row
        }),
    )?;

    let mut gen = vec![
        ("model".to_string(), model_name(args.model).to_string()),
        ("T".to_string(), args.horizon.to_string()),
        ("holdout".to_string(), args.holdout.to_string()),
        ("seed".to_string(), args.seed.to_string()),
    ];
    gen.extend(sim.params.iter().cloned());
    gen.extend((1..=q).map(|j| (format!("x0_{j}"), sim.x[(0, j - 1)].to_string())));
    out.write_key_values("generator.txt", &gen)?;

    if let Some(grid) = &sim.grid {
        out.write_csv("truth_grid.csv", &crate::commands::fit::grid_header(1), grid_rows(grid))?;
    }
    out.finish();
    Ok(())
}

pub(crate) fn grid_rows(grid: &Grid) -> impl Iterator<Item = Vec<String>> + '_ {
    grid.points().iter().map(|z| {
        std::iter::once(fmt_f(z.t))
            .chain(z.x.iter().map(|v| fmt_f(*v)))
            .collect()
    })
}
