//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use gpssm_cli::streams;
use gpssm_core::diagnostics::{batch_means_se, mean, variance};
use gpssm_core::inference::{abscissae, composite_posterior, forecast_one_step, CompositeWindow};
use gpssm_core::kernel::{kriging_moments, GpParams, Grid, InputPoint, Smoothness};
use gpssm_core::mcmc::{
    dstar_conditional, gibbs_beta_f, gibbs_beta_g, gibbs_dstar, gibbs_g_x10, gibbs_x_next, run_chain, ChainOutput,
    ProposalConfig, Sampler, XProposal,
};
use gpssm_core::model::{
    draw_data, draw_from_prior, log_posterior, loglik_data, simulate_gp_model, GpTruth, GrowthGenerator, LatentState,
    LinearGenerator, LookupTable, ObservedSeries, PriorSpec, SimulatedSeries,
};
use gpssm_core::multivariate::{
    gibbs_mv_x_next, mv_log_posterior, mv_loglik_data, mv_run_chain, Cps4Generator, GBlockProposal, MvGpParams,
    MvLatentState, MvObservedSeries, MvPriorSpec, MvProposalConfig,
};
use gpssm_core::stats::{draw_mvn, hpd_interval};
use gpssm_core::RngStream;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Res<Outcome>,
}

const JITTER: f64 = 1e-5;
const MASS: f64 = 0.95;

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "kriging point mass",
            budget: Duration::from_secs(5),
            run: c1_point_mass,
        },
        Criterion {
            id: 2,
            name: "dense-inverse oracles",
            budget: Duration::from_secs(10),
            run: c2_dense_oracles,
        },
        Criterion {
            id: 3,
            name: "Gibbs moment oracles",
            budget: Duration::from_secs(120),
            run: c3_gibbs_moments,
        },
        Criterion {
            id: 4,
            name: "Geweke joint distribution",
            budget: Duration::from_secs(600),
            run: c4_geweke,
        },
        Criterion {
            id: 5,
            name: "linear testbed recovery",
            budget: Duration::from_secs(1800),
            run: c5_linear,
        },
        Criterion {
            id: 6,
            name: "growth testbed",
            budget: Duration::from_secs(1800),
            run: c6_growth,
        },
        Criterion {
            id: 7,
            name: "multivariate collapse",
            budget: Duration::from_secs(1200),
            run: c7_collapse,
        },
        Criterion {
            id: 8,
            name: "4-variate smoke",
            budget: Duration::from_secs(2700),
            run: c8_cps4,
        },
        Criterion {
            id: 9,
            name: "composite bands",
            budget: Duration::from_secs(600),
            run: c9_composite,
        },
        Criterion {
            id: 10,
            name: "CLI determinism",
            budget: Duration::from_secs(600),
            run: c10_determinism,
        },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let elapsed = start.elapsed();
        // Criterion 9's budget excludes the fit it shares with criterion 5.
        let in_budget = elapsed <= c.budget || c.id == 9;
        let pass = outcome.pass && in_budget;
        failed += !pass as usize;
        println!(
            "criterion {:>2} {:<28} ... {} [{:.1}s / {}s] {}{}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            outcome.detail,
            if in_budget { "" } else { " (over budget)" }
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------- shared helpers ----------

fn lognormal(mu: f64, s2: f64, rng: &mut RngStream) -> f64 {
    (mu + s2.sqrt() * rng.std_normal()).exp()
}

fn random_gp(rng: &mut RngStream) -> Res<GpParams> {
    Ok(GpParams {
        beta: DVector::from_fn(3, |_, _| rng.std_normal()),
        sigma2: rng.uniform_in(0.1, 2.0),
        smooth: Smoothness::new(vec![lognormal(-0.5, 1.0, rng), lognormal(-0.5, 1.0, rng)])?,
    })
}

fn random_spd(d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.std_normal());
    &b * b.transpose() * 0.2 + DMatrix::identity(d, d) * 0.3
}

fn hpd_contains(draws: &[f64], v: f64) -> Res<bool> {
    let h = hpd_interval(draws, MASS)?;
    Ok(h.lo <= v && v <= h.hi)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

// ---------- explicit-inverse oracles ----------

fn o_corr(a: &InputPoint, b: &InputPoint, r: &[f64]) -> f64 {
    let mut acc = r[0] * (a.t - b.t).powi(2);
    for (k, rk) in r[1..].iter().enumerate() {
        acc += rk * (a.x[k] - b.x[k]).powi(2);
    }
    (-acc).exp()
}

fn o_h(z: &InputPoint) -> DVector<f64> {
    let mut v = vec![1.0, z.t];
    v.extend(&z.x);
    DVector::from_vec(v)
}

fn o_corr_matrix(pts: &[InputPoint], r: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| {
        o_corr(&pts[i], &pts[j], r) + if i == j { JITTER } else { 0.0 }
    })
}

fn o_design(pts: &[InputPoint]) -> DMatrix<f64> {
    let m = pts[0].x.len() + 2;
    DMatrix::from_fn(pts.len(), m, |i, j| o_h(&pts[i])[j])
}

fn o_cross(z: &InputPoint, pts: &[InputPoint], r: &[f64]) -> DVector<f64> {
    DVector::from_iterator(pts.len(), pts.iter().map(|p| o_corr(z, p, r)))
}

fn inv(a: &DMatrix<f64>) -> Res<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| "singular matrix in oracle".into())
}

fn o_log_normal(resid: &DVector<f64>, cov: &DMatrix<f64>) -> Res<f64> {
    let k = resid.len() as f64;
    let q = (resid.transpose() * inv(cov)? * resid)[(0, 0)];
    Ok(-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + q))
}

/// `(mean, var)` of kriging at `z` from the table values.
fn o_kriging(z: &InputPoint, grid: &Grid, values: &DVector<f64>, th: &GpParams, noise: f64) -> Res<(f64, f64)> {
    let pts = grid.points();
    let r = th.smooth.as_slice();
    let ainv = inv(&o_corr_matrix(pts, r))?;
    let s = o_cross(z, pts, r);
    let resid = values - o_design(pts) * &th.beta;
    let mean = o_h(z).dot(&th.beta) + (s.transpose() * &ainv * resid)[(0, 0)];
    let var = noise + th.sigma2 * (1.0 - (s.transpose() * &ainv * &s)[(0, 0)]);
    Ok((mean, var))
}

fn o_loglik(y: &ObservedSeries, x: &DVector<f64>, th: &GpParams, s2_eps: f64) -> Res<f64> {
    let pts: Vec<InputPoint> = (1..=y.len()).map(|t| InputPoint::scalar(t as f64, x[t])).collect();
    let v = o_corr_matrix(&pts, th.smooth.as_slice()) * th.sigma2 + DMatrix::identity(y.len(), y.len()) * s2_eps;
    o_log_normal(&(y.values() - o_design(&pts) * &th.beta), &v)
}

fn o_mv_loglik(y: &DMatrix<f64>, x: &DMatrix<f64>, th: &MvGpParams, s_eps: &DMatrix<f64>) -> Res<f64> {
    let (horizon, p) = (y.nrows(), y.ncols());
    let pts: Vec<InputPoint> = (1..=horizon)
        .map(|t| InputPoint::new(t as f64, x.row(t).iter().copied().collect()))
        .collect();
    let a = o_corr_matrix(&pts, th.smooth.as_slice());
    let v = DMatrix::from_fn(horizon * p, horizon * p, |r, c| {
        let (t, i, s, j) = (r / p, r % p, c / p, c % p);
        a[(t, s)] * th.sigma[(i, j)] + if t == s { s_eps[(i, j)] } else { 0.0 }
    });
    let mut resid = DVector::zeros(horizon * p);
    for t in 0..horizon {
        let m = th.b.transpose() * o_h(&pts[t]);
        for i in 0..p {
            resid[t * p + i] = y[(t, i)] - m[i];
        }
    }
    o_log_normal(&resid, &v)
}

/// Precision and linear term of `D* | ·`.
fn o_dstar(st: &LatentState, grid: &Grid) -> Res<(DMatrix<f64>, DVector<f64>)> {
    let pts = grid.points();
    let r = st.theta_g.smooth.as_slice();
    let (beta, s2) = (&st.theta_g.beta, st.theta_g.sigma2);
    let a = o_corr_matrix(pts, r);
    let ainv = inv(&a)?;
    let h = o_design(pts);
    let z10 = InputPoint::scalar(1.0, st.x[0]);
    let s10 = o_cross(&z10, pts, r);
    let sinv = inv(&(&a - &s10 * s10.transpose()))?;
    let mu = &h * beta + &s10 * (st.g_x10 - o_h(&z10).dot(beta));
    let mut p = &sinv / s2;
    let mut b = &sinv * mu / s2;
    for t in 1..=st.horizon() {
        let z = InputPoint::scalar((t + 1) as f64, st.x[t]);
        let s = o_cross(&z, pts, r);
        let u = &ainv * &s;
        let w = o_h(&z) - h.transpose() * &u;
        let v = s2 * (1.0 - s.dot(&u)) + st.s2_eta;
        p += &u * u.transpose() / v;
        b += &u * ((st.x[t + 1] - w.dot(beta)) / v);
    }
    Ok((p, b))
}

// ---------- criterion 1 ----------

fn c1_point_mass() -> Res<Outcome> {
    let (mut worst_var, mut worst_mean) = (0.0f64, 0.0f64);
    for g in 0..50 {
        let mut rng = RngStream::new(101, g);
        let n = 2 + rng.index(19);
        let grid = Grid::stratified(n, 1, -30.0, 30.0, &mut rng)?;
        let th = random_gp(&mut rng)?;
        let pts = grid.points();
        let cov = o_corr_matrix(pts, th.smooth.as_slice()) * th.sigma2;
        let values = draw_mvn(&(o_design(pts) * &th.beta), &cov, &mut rng)?;
        let scale = values.amax();
        for (i, z) in pts.iter().enumerate() {
            let m = kriging_moments(z, &grid, &values, &th, 0.0)?;
            worst_var = worst_var.max(m.var / th.sigma2);
            worst_mean = worst_mean.max((m.mean - values[i]).abs() / scale);
        }
    }
    Ok(Outcome {
        pass: worst_var <= 1e-4 && worst_mean <= 1e-4,
        detail: format!("max var/sigma2 = {worst_var:.2e}, max relative mean error = {worst_mean:.2e}"),
    })
}

// ---------- criterion 2 ----------

fn random_truth(rng: &mut RngStream) -> Res<GpTruth> {
    Ok(GpTruth {
        theta_f: random_gp(rng)?,
        theta_g: random_gp(rng)?,
        s2_eps: rng.uniform_in(0.05, 0.5),
        s2_eta: rng.uniform_in(0.05, 0.5),
        mu_x0: 0.0,
        s2_x0: 1.0,
    })
}

fn random_mv_gp(q: usize, d: usize, rng: &mut RngStream) -> Res<MvGpParams> {
    Ok(MvGpParams {
        b: DMatrix::from_fn(q + 2, d, |_, _| rng.std_normal() * 0.3),
        sigma: random_spd(d, rng),
        smooth: Smoothness::new((0..=q).map(|_| lognormal(-0.5, 1.0, rng)).collect())?,
    })
}

fn c2_dense_oracles() -> Res<Outcome> {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    for i in 0..20 {
        let mut rng = RngStream::new(202, i);
        let horizon = 1 + rng.index(6);
        let n = 2 + rng.index(5);
        let grid = Grid::stratified(n, 1, -3.0, 3.0, &mut rng)?;
        let truth = random_truth(&mut rng)?;
        let sim = simulate_gp_model(&truth, &grid, horizon, &mut rng)?;
        let st = sim.state(&truth);
        let y = sim.series.observed();

        let z = InputPoint::scalar(rng.uniform_in(0.0, 7.0), rng.uniform_in(-3.0, 3.0));
        let noise = rng.uniform_in(0.01, 1.0);
        let m = kriging_moments(&z, &grid, &st.dstar, &st.theta_g, noise)?;
        let (om, ov) = o_kriging(&z, &grid, &st.dstar, &st.theta_g, noise)?;
        note("kriging_moments", rel(m.mean, om).max(rel(m.var, ov)));

        let ll = loglik_data(&y, &st.x, &st.theta_f, st.s2_eps)?;
        note("loglik_data", rel(ll, o_loglik(&y, &st.x, &st.theta_f, st.s2_eps)?));

        let table = LookupTable::new(&grid, &st.theta_g.smooth)?;
        let cond = dstar_conditional(&st, &table)?;
        let (op, ob) = o_dstar(&st, &grid)?;
        note("dstar precision", rel_mat(&cond.precision, &op));
        note(
            "dstar linear term",
            rel_mat(
                &DMatrix::from_column_slice(n, 1, cond.linear.as_slice()),
                &DMatrix::from_column_slice(n, 1, ob.as_slice()),
            ),
        );

        let (p, q) = (1 + rng.index(3), 1 + rng.index(3));
        let x = DMatrix::from_fn(horizon + 2, q, |_, _| rng.uniform_in(-2.0, 2.0));
        let th = random_mv_gp(q, p, &mut rng)?;
        let s_eps = random_spd(p, &mut rng);
        let ym = DMatrix::from_fn(horizon, p, |_, _| rng.std_normal());
        let ll = mv_loglik_data(&MvObservedSeries::new(ym.clone())?, &x, &th, &s_eps)?;
        note("mv_loglik_data", rel(ll, o_mv_loglik(&ym, &x, &th, &s_eps)?));
    }
    let max = worst.values().fold(0.0f64, |a, b| a.max(*b));
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        pass: max <= 1e-8,
        detail: format!("max relative error: {detail}"),
    })
}

// ---------- criterion 3 ----------

/// Mean and covariance of the Gaussian whose log density is `f` up to a constant,
/// by second differences about `x`; exact for quadratics up to rounding.
fn quadratic_moments(
    f: impl Fn(&DVector<f64>) -> Res<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Res<(DVector<f64>, DMatrix<f64>)> {
    let d = x.len();
    let e = |i: usize| DVector::from_fn(d, |k, _| if k == i { h } else { 0.0 });
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        grad[i] = (f(&(x + e(i)))? - f(&(x - e(i)))?) / (2.0 * h);
        for j in 0..=i {
            let v = (f(&(x + e(i) + e(j)))? - f(&(x + e(i) - e(j)))? - f(&(x - e(i) + e(j)))? + f(&(x - e(i) - e(j)))?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let cov = inv(&(-&hess))?;
    Ok((x + &cov * grad, cov))
}

/// Largest `|estimate - truth| / s.e.` over the mean and covariance entries.
fn moment_z(draws: &[DVector<f64>], mean_: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = draws.len() as f64;
    let d = mean_.len();
    let m_hat = draws.iter().fold(DVector::zeros(d), |a, v| a + v) / n;
    let c_hat = draws.iter().fold(DMatrix::zeros(d, d), |a, v| {
        let r = v - &m_hat;
        a + &r * r.transpose()
    }) / (n - 1.0);
    let mut z = 0.0f64;
    for i in 0..d {
        z = z.max((m_hat[i] - mean_[i]).abs() / (cov[(i, i)] / n).sqrt());
        for j in 0..=i {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            z = z.max((c_hat[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    z
}

const GIBBS_DRAWS: usize = 100_000;

fn c3_gibbs_moments() -> Res<Outcome> {
    let mut rng = RngStream::new(303, 0);
    let grid = Grid::stratified(6, 1, -3.0, 3.0, &mut rng)?;
    let truth = GpTruth::default();
    let sim = simulate_gp_model(&truth, &grid, 5, &mut rng)?;
    let st = sim.state(&truth);
    let y = sim.series.observed();
    let prior = PriorSpec::default();
    let table = LookupTable::new(&grid, &st.theta_g.smooth)?;
    let lp = |s: &LatentState| -> Res<f64> { Ok(log_posterior(s, &y, &table, &prior)?) };

    type Setter = fn(&mut LatentState, &DVector<f64>);
    type Getter = fn(&LatentState) -> DVector<f64>;
    let blocks: [(&str, Getter, Setter); 5] = [
        ("beta_f", |s| s.theta_f.beta.clone(), |s, v| s.theta_f.beta = v.clone()),
        ("beta_g", |s| s.theta_g.beta.clone(), |s, v| s.theta_g.beta = v.clone()),
        ("g_x10", |s| DVector::from_element(1, s.g_x10), |s, v| s.g_x10 = v[0]),
        ("dstar", |s| s.dstar.clone(), |s, v| s.dstar = v.clone()),
        (
            "x_next",
            |s| DVector::from_element(1, s.x[s.horizon() + 1]),
            |s, v| {
                let last = s.horizon() + 1;
                s.x[last] = v[0];
            },
        ),
    ];
    let mut results = Vec::new();
    for (k, (name, get, set)) in blocks.iter().enumerate() {
        let f = |v: &DVector<f64>| {
            let mut s = st.clone();
            set(&mut s, v);
            lp(&s)
        };
        let (m, c) = quadratic_moments(f, &get(&st), 0.5)?;
        let mut r = RngStream::new(303, 1 + k as u64);
        let mut s = st.clone();
        let mut draws = Vec::with_capacity(GIBBS_DRAWS);
        for _ in 0..GIBBS_DRAWS {
            match *name {
                "beta_f" => gibbs_beta_f(&mut s, &y, &prior, &mut r)?,
                "beta_g" => gibbs_beta_g(&mut s, &table, &prior, &mut r)?,
                "g_x10" => gibbs_g_x10(&mut s, &table, &mut r)?,
                "dstar" => gibbs_dstar(&mut s, &table, &mut r)?,
                _ => gibbs_x_next(&mut s, &table, &mut r)?,
            }
            draws.push(get(&s));
        }
        results.push((name.to_string(), moment_z(&draws, &m, &c)));
    }

    // Multivariate x_{T+1} with p = q = 2.
    let (p, q, horizon, n) = (2, 2, 4, 5);
    let mut rng = RngStream::new(303, 99);
    let grid = Grid::stratified(n, q, -3.0, 3.0, &mut rng)?;
    let mut mst = MvLatentState {
        x: DMatrix::from_fn(horizon + 2, q, |_, _| rng.uniform_in(-2.0, 2.0)),
        g_x10: DVector::from_fn(q, |_, _| rng.std_normal()),
        dstar: DMatrix::from_fn(n, q, |_, _| rng.std_normal()),
        theta_f: random_mv_gp(q, p, &mut rng)?,
        theta_g: random_mv_gp(q, q, &mut rng)?,
        sigma_eps: random_spd(p, &mut rng),
        sigma_eta: random_spd(q, &mut rng),
    };
    let my = MvObservedSeries::new(DMatrix::from_fn(horizon, p, |_, _| rng.std_normal()))?;
    let mprior = MvPriorSpec::new(p, q);
    let mtable = LookupTable::new(&grid, &mst.theta_g.smooth)?;
    let f = |v: &DVector<f64>| -> Res<f64> {
        let mut s = mst.clone();
        s.set_x(horizon + 1, v);
        Ok(mv_log_posterior(&s, &my, &mtable, &mprior)?)
    };
    let (m, c) = quadratic_moments(f, &mst.x_at(horizon + 1), 0.5)?;
    let mut r = RngStream::new(303, 100);
    let mut draws = Vec::with_capacity(GIBBS_DRAWS);
    for _ in 0..GIBBS_DRAWS {
        gibbs_mv_x_next(&mut mst, &mtable, &mut r)?;
        draws.push(mst.x_at(horizon + 1));
    }
    results.push(("mv x_next".to_string(), moment_z(&draws, &m, &c)));

    let max = results.iter().fold(0.0f64, |a, (_, z)| a.max(*z));
    let detail = results
        .iter()
        .map(|(k, z)| format!("{k} {z:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        pass: max < 4.0,
        detail: format!("max |z|: {detail}"),
    })
}

// ---------- criterion 4 ----------

fn geweke_stats(s: &LatentState) -> [f64; 10] {
    [
        s.theta_f.beta[0],
        s.theta_g.beta[2],
        s.theta_f.sigma2.ln(),
        s.theta_g.sigma2.ln(),
        s.s2_eps.ln(),
        s.s2_eta.ln(),
        s.theta_f.smooth.get(0).ln(),
        s.theta_g.smooth.get(1).ln(),
        s.x[2],
        s.dstar[0],
    ]
}

const GEWEKE_CYCLES: usize = 200_000;

fn c4_geweke() -> Res<Outcome> {
    let mut prior = PriorSpec::default();
    for (a, g, m) in [
        (&mut prior.alpha_f, &mut prior.gamma_f, 0.5),
        (&mut prior.alpha_g, &mut prior.gamma_g, 0.2),
        (&mut prior.alpha_eps, &mut prior.gamma_eps, 0.2),
        (&mut prior.alpha_eta, &mut prior.gamma_eta, 0.2),
    ] {
        *a = 10.0;
        *g = m * (10.0 - 2.0);
    }
    prior.s2_r_f = [0.25; 2];
    prior.s2_r_g = [0.25; 2];
    let horizon = 3;
    let mut rng = RngStream::new(2024, 0);
    let grid = Grid::stratified(4, 1, -3.0, 3.0, &mut rng)?;

    let mut forward = Vec::with_capacity(GEWEKE_CYCLES);
    for _ in 0..GEWEKE_CYCLES {
        forward.push(geweke_stats(&draw_from_prior(&prior, &grid, horizon, &mut rng)?.0));
    }
    let (s, y) = draw_from_prior(&prior, &grid, horizon, &mut rng)?;
    let mut sampler = Sampler::new(s, y, grid, prior, ProposalConfig::default())?;
    let mut chained = Vec::with_capacity(GEWEKE_CYCLES);
    for _ in 0..GEWEKE_CYCLES {
        sampler.sweep(&mut rng)?;
        let y = draw_data(sampler.state(), &mut rng)?;
        sampler.set_series(y)?;
        chained.push(geweke_stats(sampler.state()));
    }
    let mut zs = Vec::new();
    for k in 0..10 {
        let a: Vec<f64> = forward.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = chained.iter().map(|v| v[k]).collect();
        let se_a2 = variance(&a) / a.len() as f64;
        let se_b = batch_means_se(&b, 20)?;
        zs.push((mean(&a) - mean(&b)) / (se_a2 + se_b * se_b).sqrt());
    }
    let max = zs.iter().fold(0.0f64, |a, z| a.max(z.abs()));
    Ok(Outcome {
        pass: max < 4.0,
        detail: format!(
            "max |z| = {max:.2}; z = [{}]",
            zs.iter().map(|z| format!("{z:.2}")).collect::<Vec<_>>().join(", ")
        ),
    })
}

// ---------- criteria 5, 6, 9: univariate testbeds ----------

const TESTBED_T: usize = 30;
const TESTBED_N: usize = 30;
const TESTBED_BURNIN: usize = 1000;
const TESTBED_RETAINED: usize = 5000;
const TESTBED_SEEDS: [u64; 3] = [1, 2, 3];

struct Testbed {
    sim: SimulatedSeries,
    chain: ChainOutput,
}

fn testbed(sim: SimulatedSeries, seed: u64, config: &ProposalConfig) -> Res<Testbed> {
    let y = sim.observed();
    let grid = Grid::stratified(TESTBED_N, 1, -30.0, 30.0, &mut RngStream::new(seed, streams::GRID))?;
    let chain = run_chain(
        &y,
        &grid,
        &PriorSpec::default(),
        config,
        TESTBED_BURNIN + TESTBED_RETAINED,
        TESTBED_BURNIN,
        1,
        &mut RngStream::new(seed, 0),
    )?;
    Ok(Testbed { sim, chain })
}

fn linear_testbed(seed: u64) -> Res<Testbed> {
    let sim = LinearGenerator::default().simulate(TESTBED_T, &mut RngStream::new(seed, streams::SIMULATE))?;
    testbed(sim, seed, &ProposalConfig::default())
}

/// Fraction of `x_1..x_T` inside their pointwise HPD intervals.
fn path_coverage(tb: &Testbed) -> Res<f64> {
    let horizon = tb.sim.horizon();
    let mut hits = 0;
    for t in 1..=horizon {
        hits += hpd_contains(&tb.chain.draws(|s| s.x[t]), tb.sim.x[t])? as usize;
    }
    Ok(hits as f64 / horizon as f64)
}

fn forecast_hit(tb: &Testbed, seed: u64) -> Res<bool> {
    let draws = forecast_one_step(&tb.chain, &tb.sim.observed(), &RngStream::new(seed, streams::FORECAST))?;
    hpd_contains(&draws, tb.sim.held_out_y())
}

static LINEAR_FIRST: OnceLock<Testbed> = OnceLock::new();

fn c5_linear() -> Res<Outcome> {
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    let mut notes = Vec::new();
    for seed in TESTBED_SEEDS {
        let tb = linear_testbed(seed)?;
        let sa = hpd_contains(&tb.chain.draws(|s| s.s2_eps.sqrt()), 0.1)?;
        let sb = hpd_contains(&tb.chain.draws(|s| s.theta_f.beta[1]), 0.0)?
            && hpd_contains(&tb.chain.draws(|s| s.theta_g.beta[1]), 0.0)?;
        let cov = path_coverage(&tb)?;
        let sd = forecast_hit(&tb, seed)?;
        a += sa as usize;
        b += sb as usize;
        c += (cov >= 0.9) as usize;
        d += sd as usize;
        notes.push(format!(
            "seed {seed}: a={} b={} x-cov={cov:.2} d={}",
            sa as u8, sb as u8, sd as u8
        ));
        if seed == TESTBED_SEEDS[0] {
            let _ = LINEAR_FIRST.set(tb);
        }
    }
    let k = TESTBED_SEEDS.len();
    let pass = 3 * a >= 2 * k && b == k && c == k && 3 * d >= 2 * k;
    Ok(Outcome {
        pass,
        detail: format!("(a) {a}/{k} (b) {b}/{k} (c) {c}/{k} (d) {d}/{k}; {}", notes.join("; ")),
    })
}

fn c6_growth() -> Res<Outcome> {
    let config = ProposalConfig {
        x_proposal: XProposal::TimeScaled,
        ..ProposalConfig::default()
    };
    let (mut c, mut d) = (0, 0);
    let mut notes = Vec::new();
    for seed in TESTBED_SEEDS {
        let sim = GrowthGenerator::default().simulate(TESTBED_T, &mut RngStream::new(seed, streams::SIMULATE))?;
        let tb = testbed(sim, seed, &config)?;
        let cov = path_coverage(&tb)?;
        let sd = forecast_hit(&tb, seed)?;
        c += (cov >= 0.9) as usize;
        d += sd as usize;
        notes.push(format!("seed {seed}: x-cov={cov:.2} d={}", sd as u8));
    }
    let k = TESTBED_SEEDS.len();
    Ok(Outcome {
        pass: c == k && 3 * d >= 2 * k,
        detail: format!("(c) {c}/{k} (d) {d}/{k}; {}", notes.join("; ")),
    })
}

fn c9_composite() -> Res<Outcome> {
    let seed = TESTBED_SEEDS[0];
    let tb = match LINEAR_FIRST.get() {
        Some(tb) => tb,
        None => {
            let _ = LINEAR_FIRST.set(linear_testbed(seed)?);
            LINEAR_FIRST.get().expect("just set")
        }
    };
    let start = Instant::now();
    let gen = LinearGenerator::default();
    let window = CompositeWindow::Posterior;
    let (lo, hi) = window.resolve(&tb.chain)?;
    let xs = abscissae(lo, hi, 41);
    let comp = composite_posterior(
        &tb.chain,
        &tb.sim.observed(),
        3,
        &xs,
        window,
        &RngStream::new(seed, streams::COMPOSITE),
    )?;
    let mut worst = 1.0f64;
    let mut notes = Vec::new();
    for t in 1..=3 {
        for observation in [false, true] {
            let bands = comp.bands(t, observation, MASS)?;
            let hits = xs
                .iter()
                .zip(&bands)
                .filter(|(x, b)| {
                    let mut g = **x;
                    for _ in 0..t {
                        g = gen.evolution(g);
                    }
                    let v = if observation { gen.observation(g) } else { g };
                    b.lo <= v && v <= b.hi
                })
                .count();
            let frac = hits as f64 / xs.len() as f64;
            worst = worst.min(frac);
            notes.push(format!("{}*_{t} {frac:.2}", if observation { "f" } else { "g" }));
        }
    }
    Ok(Outcome {
        pass: worst >= 0.95 && start.elapsed() <= Duration::from_secs(600),
        detail: format!("window [{lo:.2}, {hi:.2}], 41 abscissae; covered: {}", notes.join(", ")),
    })
}

// ---------- criterion 7 ----------

const COLLAPSE_CHAINS: u64 = 2;
const COLLAPSE_BURNIN: usize = 1000;
const COLLAPSE_RETAINED: usize = 10_000;

/// Pooled mean and its batch-means standard error over equal-length chains.
fn pooled(chains: &[Vec<f64>]) -> Res<(f64, f64)> {
    let k = chains.len() as f64;
    let m = chains.iter().map(|c| mean(c)).sum::<f64>() / k;
    let var = chains
        .iter()
        .map(|c| batch_means_se(c, 20).map(|s| s * s))
        .sum::<Result<f64, _>>()?;
    Ok((m, var.sqrt() / k))
}

fn c7_collapse() -> Res<Outcome> {
    let seed = 7;
    let sim = LinearGenerator::default().simulate(TESTBED_T, &mut RngStream::new(seed, streams::SIMULATE))?;
    let y = sim.observed();
    let grid = Grid::stratified(TESTBED_N, 1, -30.0, 30.0, &mut RngStream::new(seed, streams::GRID))?;
    let prior = PriorSpec::default();
    let mprior = MvPriorSpec::from_univariate(&prior);
    let uconfig = ProposalConfig::default();
    let mconfig = MvProposalConfig {
        g_block_proposal: GBlockProposal::Independence,
        rw_sd_chol: uconfig.rw_sd_sigma,
        ..MvProposalConfig::default()
    };
    let my = MvObservedSeries::new(DMatrix::from_column_slice(y.len(), 1, y.values().as_slice()))?;
    let iters = COLLAPSE_BURNIN + COLLAPSE_RETAINED;
    let (mut u_sig, mut u_b, mut m_sig, mut m_b) = (vec![], vec![], vec![], vec![]);
    for k in 0..COLLAPSE_CHAINS {
        let u = run_chain(
            &y,
            &grid,
            &prior,
            &uconfig,
            iters,
            COLLAPSE_BURNIN,
            1,
            &mut RngStream::new(seed, k),
        )?;
        u_sig.push(u.draws(|s| s.s2_eps.sqrt()));
        u_b.push(u.draws(|s| s.theta_f.beta[0]));
        let m = mv_run_chain(
            &my,
            &grid,
            &mprior,
            &mconfig,
            iters,
            COLLAPSE_BURNIN,
            1,
            &mut RngStream::new(seed, k),
        )?;
        m_sig.push(m.draws(|s| s.sigma_eps[(0, 0)].sqrt()));
        m_b.push(m.draws(|s| s.theta_f.b[(0, 0)]));
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, u, m) in [("sigma_eps", &u_sig, &m_sig), ("beta_f intercept", &u_b, &m_b)] {
        let (mu, su) = pooled(u)?;
        let (mm, sm) = pooled(m)?;
        let z = (mu - mm).abs() / (su * su + sm * sm).sqrt();
        pass &= z < 3.0;
        notes.push(format!("{name}: univariate {mu:.4} multivariate {mm:.4} ({z:.2} s.e.)"));
    }
    Ok(Outcome {
        pass,
        detail: notes.join("; "),
    })
}

// ---------- criterion 8 ----------

fn c8_cps4() -> Res<Outcome> {
    let (horizon, n, burnin, retained) = (20, 20, 500, 2000);
    let seeds = [1u64, 2, 3];
    let gen = Cps4Generator::default();
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in seeds {
        let sim = gen.simulate(horizon, &mut RngStream::new(seed, streams::SIMULATE))?;
        let y = sim.observed();
        let grid = Grid::stratified(n, 4, -30.0, 30.0, &mut RngStream::new(seed, streams::GRID))?;
        let chain = mv_run_chain(
            &y,
            &grid,
            &MvPriorSpec::new(4, 4),
            &MvProposalConfig::default(),
            burnin + retained,
            burnin,
            1,
            &mut RngStream::new(seed, 0),
        )?;
        let mut covered = 0;
        for j in 0..4 {
            covered += hpd_contains(&chain.draws(|s| s.x[(0, j)]), sim.x[(0, j)])? as usize;
        }
        good += (covered >= 3) as usize;
        notes.push(format!("seed {seed}: {covered}/4"));
    }
    Ok(Outcome {
        pass: 3 * good >= 2 * seeds.len(),
        detail: format!(
            "{good}/{} seeds with >= 3/4 coordinates of x0 covered; {}",
            seeds.len(),
            notes.join(", ")
        ),
    })
}

// ---------- criterion 10 ----------

fn gpssm(args: &[&str]) -> Res<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_gpssm")).args(args).output()?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)).into());
    }
    Ok(())
}

fn snapshot(dir: &Path) -> Res<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for sub in fs::read_dir(dir)? {
        let sub = sub?.path();
        for f in fs::read_dir(&sub)? {
            let f = f?.path();
            let key = f.strip_prefix(dir)?.display().to_string();
            files.insert(key, fs::read(&f)?);
        }
    }
    Ok(files)
}

fn c10_determinism() -> Res<Outcome> {
    let tmp = tempfile::TempDir::new()?;
    let root = tmp.path().join("run");
    let d = |s: &str| root.join(s).display().to_string();
    let commands: Vec<Vec<String>> = [
        vec![
            "simulate",
            "--model",
            "linear",
            "--T",
            "15",
            "--seed",
            "5",
            "--holdout",
            "2",
            "--out",
            &d("sim"),
        ],
        vec![
            "simulate",
            "--model",
            "gp",
            "--T",
            "8",
            "--seed",
            "5",
            "--n",
            "6",
            "--out",
            &d("simgp"),
        ],
        vec![
            "simulate",
            "--model",
            "cps4",
            "--T",
            "6",
            "--seed",
            "5",
            "--out",
            &d("sim4"),
        ],
        vec![
            "fit",
            "--data",
            &format!("{}/series.csv", d("sim")),
            "--iters",
            "400",
            "--burnin",
            "100",
            "--n",
            "10",
            "--chains",
            "2",
            "--seed",
            "5",
            "--out",
            &d("fit"),
        ],
        vec![
            "fit",
            "--data",
            &format!("{}/series.csv", d("sim4")),
            "--iters",
            "60",
            "--burnin",
            "20",
            "--n",
            "5",
            "--seed",
            "5",
            "--out",
            &d("fit4"),
        ],
        vec![
            "forecast",
            "--fit",
            &d("fit"),
            "--k",
            "2",
            "--truth",
            &format!("{}/truth.csv", d("sim")),
            "--composite",
            "3",
            "--max-trajectories",
            "20",
            "--out",
            &d("fc"),
        ],
        vec!["forecast", "--fit", &d("fit4"), "--out", &d("fc4")],
        vec![
            "summarize",
            "--samples",
            &format!("{}/samples.csv", d("fit")),
            "--out",
            &d("sum"),
        ],
    ]
    .iter()
    .map(|c| c.iter().map(|s| s.to_string()).collect())
    .collect();
    let run_all = || -> Res<BTreeMap<String, Vec<u8>>> {
        if root.exists() {
            fs::remove_dir_all(&root)?;
        }
        for c in &commands {
            gpssm(&c.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        snapshot(&root)
    };
    let first = run_all()?;
    let second = run_all()?;
    let differing: Vec<&String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    Ok(Outcome {
        pass: differing.is_empty() && !first.is_empty(),
        detail: if differing.is_empty() {
            format!(
                "{} commands, {} files identical across reruns",
                commands.len(),
                first.len()
            )
        } else {
            format!("differing files: {differing:?}")
        },
    })
}
