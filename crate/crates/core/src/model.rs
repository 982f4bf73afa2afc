//! The univariate Gaussian-process state-space model.
//!
//! ```text
//! y_t = f(t, x_t) + ε_t,        ε_t ~ N(0, σ²_ε),  t = 1..T
//! x_t = g(t, x_{t-1}) + η_t,    η_t ~ N(0, σ²_η)
//! ```
//!
//! `f` and `g` are independent Gaussian processes. The path of `g` is summarized by
//! a look-up table `D*` of its values on a fixed grid, plus the value `g(1, x₀)`
//! that generates `x₁`. Conditional on the table, each transition is a kriging
//! prediction, which keeps the latent-state density tractable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{
    design_matrix, design_vector, GpParams, Grid, InputPoint, KrigingMoments, KrigingSystem, Smoothness,
};
use crate::linalg::{Factor, DEFAULT_JITTER};
use crate::rng::RngStream;
use crate::stats::{
    draw_inverse_gamma, draw_mvn, draw_normal, logpdf_inverse_gamma_form, logpdf_lognormal, logpdf_normal,
};

/// Observations `y_1..y_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedSeries {
    y: DVector<f64>,
}

impl ObservedSeries {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("series is empty"));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("observation at t = {} is not finite", i + 1)));
        }
        Ok(Self {
            y: DVector::from_vec(y),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.y
    }

    /// `y_t` for `t` in `1..=T`.
    pub fn at(&self, t: usize) -> f64 {
        self.y[t - 1]
    }

    pub fn appended(&self, v: f64) -> Result<Self> {
        let mut y: Vec<f64> = self.y.iter().copied().collect();
        y.push(v);
        Self::new(y)
    }
}

/// Prior hyperparameters of the univariate model.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    /// Log-normal location and variance for `(r₁, r₂)` of `f`.
    pub mu_r_f: [f64; 2],
    pub s2_r_f: [f64; 2],
    pub mu_r_g: [f64; 2],
    pub s2_r_g: [f64; 2],
    pub alpha_f: f64,
    pub gamma_f: f64,
    pub alpha_g: f64,
    pub gamma_g: f64,
    pub alpha_eps: f64,
    pub gamma_eps: f64,
    pub alpha_eta: f64,
    pub gamma_eta: f64,
    pub beta_f0: DVector<f64>,
    pub sigma_beta_f0: DMatrix<f64>,
    pub beta_g0: DVector<f64>,
    pub sigma_beta_g0: DMatrix<f64>,
    pub mu_x0: f64,
    pub s2_x0: f64,
}

/// Shape used for every variance prior in the default recipe.
pub const DEFAULT_ALPHA: f64 = 4.01;

impl Default for PriorSpec {
    /// Smoothness log-normal(-0.5, 1) (mean 1); variance priors with `α = 4.01` and
    /// prior means 0.5, 0.5, 0.1, 0.1 for `σ²_f, σ²_g, σ²_ε, σ²_η`; `β ~ N(0, I₃)`;
    /// `x₀ ~ N(0, 1)`.
    fn default() -> Self {
        Self::with_variance_means(0.5, 0.5, 0.1, 0.1)
    }
}

impl PriorSpec {
    /// Default recipe with given prior means `γ/(α-2)` for the four variances.
    pub fn with_variance_means(f: f64, g: f64, eps: f64, eta: f64) -> Self {
        let a = DEFAULT_ALPHA;
        Self {
            mu_r_f: [-0.5; 2],
            s2_r_f: [1.0; 2],
            mu_r_g: [-0.5; 2],
            s2_r_g: [1.0; 2],
            alpha_f: a,
            gamma_f: f * (a - 2.0),
            alpha_g: a,
            gamma_g: g * (a - 2.0),
            alpha_eps: a,
            gamma_eps: eps * (a - 2.0),
            alpha_eta: a,
            gamma_eta: eta * (a - 2.0),
            beta_f0: DVector::zeros(3),
            sigma_beta_f0: DMatrix::identity(3, 3),
            beta_g0: DVector::zeros(3),
            sigma_beta_g0: DMatrix::identity(3, 3),
            mu_x0: 0.0,
            s2_x0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("alpha_f", self.alpha_f),
            ("gamma_f", self.gamma_f),
            ("alpha_g", self.alpha_g),
            ("gamma_g", self.gamma_g),
            ("alpha_eps", self.alpha_eps),
            ("gamma_eps", self.gamma_eps),
            ("alpha_eta", self.alpha_eta),
            ("gamma_eta", self.gamma_eta),
            ("s2_x0", self.s2_x0),
            ("s2_r_f[0]", self.s2_r_f[0]),
            ("s2_r_f[1]", self.s2_r_f[1]),
            ("s2_r_g[0]", self.s2_r_g[0]),
            ("s2_r_g[1]", self.s2_r_g[1]),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("prior {name} must be positive, got {v}")));
            }
        }
        for (name, b, s) in [
            ("beta_f0", &self.beta_f0, &self.sigma_beta_f0),
            ("beta_g0", &self.beta_g0, &self.sigma_beta_g0),
        ] {
            if b.len() != 3 || s.shape() != (3, 3) {
                return Err(Error::invalid(format!("prior {name} must have 3 entries")));
            }
            Factor::cholesky(s, &format!("prior covariance of {name}"))?;
        }
        Ok(())
    }

    /// Prior mean of a variance with this shape/scale, or the mode if the mean is undefined.
    pub fn variance_center(alpha: f64, gamma: f64) -> f64 {
        if alpha > 2.0 {
            gamma / (alpha - 2.0)
        } else {
            gamma / (alpha + 2.0)
        }
    }

    /// Log prior density of the hyperparameters (the `x₀` prior is part of the latent density).
    pub fn log_prior(&self, state: &LatentState) -> Result<f64> {
        let mut lp = 0.0;
        lp += logpdf_inverse_gamma_form(state.theta_f.sigma2, self.alpha_f, self.gamma_f);
        lp += logpdf_inverse_gamma_form(state.theta_g.sigma2, self.alpha_g, self.gamma_g);
        lp += logpdf_inverse_gamma_form(state.s2_eps, self.alpha_eps, self.gamma_eps);
        lp += logpdf_inverse_gamma_form(state.s2_eta, self.alpha_eta, self.gamma_eta);
        for i in 0..2 {
            lp += logpdf_lognormal(state.theta_f.smooth.get(i), self.mu_r_f[i], self.s2_r_f[i]);
            lp += logpdf_lognormal(state.theta_g.smooth.get(i), self.mu_r_g[i], self.s2_r_g[i]);
        }
        let bf = Factor::cholesky(&self.sigma_beta_f0, "prior covariance of beta_f")?;
        let bg = Factor::cholesky(&self.sigma_beta_g0, "prior covariance of beta_g")?;
        lp += bf.log_normal_density(&(&state.theta_f.beta - &self.beta_f0));
        lp += bg.log_normal_density(&(&state.theta_g.beta - &self.beta_g0));
        Ok(lp)
    }

    /// One draw of `(θ_f, θ_g, σ²_ε, σ²_η)` from the prior.
    pub fn draw_hyperparameters(&self, rng: &mut RngStream) -> Result<(GpParams, GpParams, f64, f64)> {
        let mut gp = |b0: &DVector<f64>,
                      sb: &DMatrix<f64>,
                      alpha: f64,
                      gamma: f64,
                      mu: [f64; 2],
                      s2: [f64; 2]|
         -> Result<GpParams> {
            let beta = draw_mvn(b0, sb, rng)?;
            let sigma2 = draw_inverse_gamma(alpha / 2.0, gamma / 2.0, rng)?;
            let r = vec![
                draw_normal(mu[0], s2[0].sqrt(), rng)?.exp(),
                draw_normal(mu[1], s2[1].sqrt(), rng)?.exp(),
            ];
            Ok(GpParams {
                beta,
                sigma2,
                smooth: Smoothness::new(r)?,
            })
        };
        let theta_f = gp(
            &self.beta_f0,
            &self.sigma_beta_f0,
            self.alpha_f,
            self.gamma_f,
            self.mu_r_f,
            self.s2_r_f,
        )?;
        let theta_g = gp(
            &self.beta_g0,
            &self.sigma_beta_g0,
            self.alpha_g,
            self.gamma_g,
            self.mu_r_g,
            self.s2_r_g,
        )?;
        let s2_eps = draw_inverse_gamma(self.alpha_eps / 2.0, self.gamma_eps / 2.0, rng)?;
        let s2_eta = draw_inverse_gamma(self.alpha_eta / 2.0, self.gamma_eta / 2.0, rng)?;
        Ok((theta_f, theta_g, s2_eps, s2_eta))
    }
}

/// Every unknown of the univariate model.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    /// `x_0, x_1, …, x_{T+1}`.
    pub x: DVector<f64>,
    /// `g(1, x₀)`.
    pub g_x10: f64,
    /// Look-up table `D*`: values of `g` on the grid.
    pub dstar: DVector<f64>,
    pub theta_f: GpParams,
    pub theta_g: GpParams,
    pub s2_eps: f64,
    pub s2_eta: f64,
}

impl LatentState {
    /// Number of observations `T` this state is sized for.
    pub fn horizon(&self) -> usize {
        self.x.len() - 2
    }

    pub fn validate(&self, y: &ObservedSeries, grid: &Grid) -> Result<()> {
        if grid.dim() != 1 {
            return Err(Error::invalid(
                "univariate model needs a grid with one latent coordinate",
            ));
        }
        if self.x.len() != y.len() + 2 {
            return Err(Error::invalid(format!(
                "latent path has {} entries, expected T + 2 = {}",
                self.x.len(),
                y.len() + 2
            )));
        }
        if self.dstar.len() != grid.len() {
            return Err(Error::invalid("look-up table size does not match the grid"));
        }
        for (name, th) in [("theta_f", &self.theta_f), ("theta_g", &self.theta_g)] {
            if th.beta.len() != 3 || th.smooth.len() != 2 {
                return Err(Error::invalid(format!("{name} has the wrong dimensions")));
            }
        }
        Ok(())
    }

    /// Names of the entries returned by [`LatentState::to_row`].
    pub fn column_names(horizon: usize, n: usize) -> Vec<String> {
        let mut c: Vec<String> = (0..=horizon + 1).map(|t| format!("x_{t}")).collect();
        c.push("g_x10".into());
        c.extend((1..=n).map(|i| format!("dstar_{i}")));
        for side in ["f", "g"] {
            c.extend((0..3).map(|i| format!("beta_{side}_{i}")));
            c.push(format!("sigma2_{side}"));
            c.push(format!("r_{side}_1"));
            c.push(format!("r_{side}_2"));
        }
        c.push("sigma2_eps".into());
        c.push("sigma2_eta".into());
        c
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.x.iter().copied().collect();
        r.push(self.g_x10);
        r.extend(self.dstar.iter());
        for th in [&self.theta_f, &self.theta_g] {
            r.extend(th.beta.iter());
            r.push(th.sigma2);
            r.extend(th.smooth.as_slice());
        }
        r.push(self.s2_eps);
        r.push(self.s2_eta);
        r
    }

    pub fn from_row(row: &[f64], horizon: usize, n: usize) -> Result<Self> {
        let expect = horizon + 2 + 1 + n + 12 + 2;
        if row.len() != expect {
            return Err(Error::invalid(format!(
                "state row has {} values, expected {expect}",
                row.len()
            )));
        }
        let mut it = row.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let x = DVector::from_vec(take(horizon + 2));
        let g_x10 = take(1)[0];
        let dstar = DVector::from_vec(take(n));
        let mut gp = || -> Result<GpParams> {
            let beta = DVector::from_vec(take(3));
            let sigma2 = take(1)[0];
            let smooth = Smoothness::new(take(2))?;
            Ok(GpParams { beta, sigma2, smooth })
        };
        let theta_f = gp()?;
        let theta_g = gp()?;
        let rest = take(2);
        Ok(Self {
            x,
            g_x10,
            dstar,
            theta_f,
            theta_g,
            s2_eps: rest[0],
            s2_eta: rest[1],
        })
    }
}

/// Inputs `(t, x_t)` for `t = 1..T` taken from a path `x_0..`.
pub fn data_inputs(x: &DVector<f64>, horizon: usize) -> Vec<InputPoint> {
    (1..=horizon).map(|t| InputPoint::scalar(t as f64, x[t])).collect()
}

/// `σ²_f A_f + σ²_ε I` on the data inputs.
pub fn data_covariance(points: &[InputPoint], theta_f: &GpParams, s2_eps: f64) -> DMatrix<f64> {
    let a = crate::kernel::corr_matrix(points, &theta_f.smooth, DEFAULT_JITTER);
    let mut v = a * theta_f.sigma2;
    for i in 0..v.nrows() {
        v[(i, i)] += s2_eps;
    }
    v
}

/// `log N_T(y; Hβ_f, σ²_f A_f + σ²_ε I)` with `A_f` built on `(t, x_t)`.
pub fn loglik_data(y: &ObservedSeries, x: &DVector<f64>, theta_f: &GpParams, s2_eps: f64) -> Result<f64> {
    let horizon = y.len();
    if x.len() < horizon + 1 {
        return Err(Error::invalid("latent path is shorter than the series"));
    }
    if !(s2_eps >= 0.0) || !(theta_f.sigma2 >= 0.0) {
        return Err(Error::invalid("variances must be non-negative"));
    }
    let points = data_inputs(x, horizon);
    let v = data_covariance(&points, theta_f, s2_eps);
    let f = Factor::cholesky(&v, "data covariance")?;
    let resid = y.values() - design_matrix(&points) * &theta_f.beta;
    Ok(f.log_normal_density(&resid))
}

/// The factored look-up table for one value of `r_g`.
#[derive(Clone, Debug)]
pub struct LookupTable {
    sys: KrigingSystem,
}

/// Quantities that depend on `x₀` through `x*_{1,0} = (1, x₀)`.
#[derive(Clone, Debug)]
pub struct AugmentedTable {
    pub s10: DVector<f64>,
    pub h10: DVector<f64>,
    /// Factor of `Σ_{g,D*} = A - s₁₀ s₁₀ᵀ`.
    pub sigma: Factor,
}

/// One transition `x_t -> x_{t+1}` evaluated at input `(t+1, x_t)`.
#[derive(Clone, Debug)]
pub struct TransitionTerm {
    pub s: DVector<f64>,
    /// `A⁻¹ s`.
    pub u: DVector<f64>,
    /// `h - Hᵀ A⁻¹ s`, so the kriging mean is `wᵀβ + uᵀD*`.
    pub w: DVector<f64>,
    /// `sᵀ A⁻¹ s`.
    pub explained: f64,
}

impl LookupTable {
    pub fn new(grid: &Grid, smooth: &Smoothness) -> Result<Self> {
        let sys = KrigingSystem::new(grid.points().to_vec(), smooth.clone(), "look-up table correlation")?;
        Ok(Self { sys })
    }

    pub fn system(&self) -> &KrigingSystem {
        &self.sys
    }

    pub fn len(&self) -> usize {
        self.sys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sys.is_empty()
    }

    pub fn augmented(&self, x0: f64) -> Result<AugmentedTable> {
        self.augmented_at(&InputPoint::scalar(1.0, x0))
    }

    /// Augmented quantities at an arbitrary input `z = (1, x₀)`.
    pub fn augmented_at(&self, z: &InputPoint) -> Result<AugmentedTable> {
        let s10 = self.sys.cross_corr(z);
        let sigma = self.sys.corr() - &s10 * s10.transpose();
        let sigma = Factor::cholesky(
            &crate::linalg::symmetrize(&sigma),
            "conditional look-up table covariance",
        )?;
        Ok(AugmentedTable {
            s10,
            h10: design_vector(z),
            sigma,
        })
    }

    pub fn transition_term(&self, t_next: usize, x_prev: f64) -> TransitionTerm {
        self.transition_term_at(&InputPoint::scalar(t_next as f64, x_prev))
    }

    pub fn transition_term_at(&self, z: &InputPoint) -> TransitionTerm {
        let s = self.sys.cross_corr(z);
        let u = self.sys.factor().solve(&s);
        let w = design_vector(z) - self.sys.design().transpose() * &u;
        let explained = s.dot(&u);
        TransitionTerm { s, u, w, explained }
    }

    /// Moments of `x_{t+1} | x_t, D*, θ_g, σ²_η`.
    pub fn transition(&self, state: &LatentState, t: usize) -> Result<KrigingMoments> {
        let w = self.sys.weights(&state.dstar, &state.theta_g.beta);
        self.transition_with_weights(state, &w, t)
    }

    fn transition_with_weights(&self, state: &LatentState, weights: &DVector<f64>, t: usize) -> Result<KrigingMoments> {
        let z = InputPoint::scalar((t + 1) as f64, state.x[t]);
        self.sys
            .moments_with_weights(&z, weights, &state.theta_g.beta, state.theta_g.sigma2, state.s2_eta)
    }

    /// `Σ_{t ∈ ts} log N(x_{t+1}; μ_t, σ²_t)`.
    pub fn log_transitions(&self, state: &LatentState, ts: impl IntoIterator<Item = usize>) -> Result<f64> {
        let w = self.sys.weights(&state.dstar, &state.theta_g.beta);
        let mut acc = 0.0;
        for t in ts {
            let m = self.transition_with_weights(state, &w, t)?;
            acc += logpdf_normal(state.x[t + 1], m.mean, m.var);
        }
        Ok(acc)
    }

    /// Mean of `D* | g(1, x₀)`: `Hβ + s₁₀ (g₁₀ - h₁₀ᵀβ)`.
    pub fn conditional_mean(&self, aug: &AugmentedTable, g_x10: f64, beta: &DVector<f64>) -> DVector<f64> {
        self.sys.design() * beta + &aug.s10 * (g_x10 - aug.h10.dot(beta))
    }

    /// `log N(g₁₀; h₁₀ᵀβ_g, σ²_g) + log N_n(D*; μ_{g,D*}, σ²_g Σ_{g,D*})`.
    pub fn log_g_block(&self, state: &LatentState, aug: &AugmentedTable) -> f64 {
        let beta = &state.theta_g.beta;
        let s2 = state.theta_g.sigma2;
        let mut lp = logpdf_normal(state.g_x10, aug.h10.dot(beta), s2);
        let r = &state.dstar - self.conditional_mean(aug, state.g_x10, beta);
        let n = self.len() as f64;
        lp += -0.5 * (n * (2.0 * std::f64::consts::PI * s2).ln() + aug.sigma.log_det() + aug.sigma.quad(&r) / s2);
        lp
    }
}

/// `log N(x₁; g₁₀, σ²_η)`.
pub fn log_x1(state: &LatentState) -> f64 {
    logpdf_normal(state.x[1], state.g_x10, state.s2_eta)
}

/// Log density of every latent quantity given the hyperparameters:
/// `[x₀][g₁₀ | x₀][D* | g₁₀, x₀][x₁ | g₁₀] Π_{t=1..T} [x_{t+1} | x_t, D*]`.
pub fn logjoint_latent_with(state: &LatentState, table: &LookupTable, prior: &PriorSpec) -> Result<f64> {
    let horizon = state.horizon();
    let aug = table.augmented(state.x[0])?;
    let mut lp = logpdf_normal(state.x[0], prior.mu_x0, prior.s2_x0);
    lp += table.log_g_block(state, &aug);
    lp += log_x1(state);
    lp += table.log_transitions(state, 1..=horizon)?;
    Ok(lp)
}

pub fn logjoint_latent(state: &LatentState, grid: &Grid, prior: &PriorSpec) -> Result<f64> {
    let table = LookupTable::new(grid, &state.theta_g.smooth)?;
    logjoint_latent_with(state, &table, prior)
}

/// Unnormalized log posterior: priors, latent density and data likelihood.
pub fn log_posterior(state: &LatentState, y: &ObservedSeries, table: &LookupTable, prior: &PriorSpec) -> Result<f64> {
    Ok(prior.log_prior(state)?
        + logjoint_latent_with(state, table, prior)?
        + loglik_data(y, &state.x, &state.theta_f, state.s2_eps)?)
}

/// A simulated path with one extra time point kept for forecast checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSeries {
    /// `x_0..x_{T+1}`.
    pub x: Vec<f64>,
    /// `y_1..y_{T+1}`.
    pub y: Vec<f64>,
}

impl SimulatedSeries {
    pub fn horizon(&self) -> usize {
        self.y.len() - 1
    }

    /// The first `T` observations, i.e. everything except the held-out point.
    pub fn observed(&self) -> ObservedSeries {
        ObservedSeries::new(self.y[..self.horizon()].to_vec()).expect("simulated values are finite")
    }

    pub fn held_out_y(&self) -> f64 {
        self.y[self.horizon()]
    }
}

/// `x_t = a₀ + a₁ x_{t-1} + u_t`, `y_t = b₀ + b₁ x_t + v_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGenerator {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub sd_u: f64,
    pub sd_v: f64,
    pub x0: f64,
}

impl Default for LinearGenerator {
    fn default() -> Self {
        Self {
            a0: 1.0,
            a1: 0.1,
            b0: 8.0,
            b1: 0.05,
            sd_u: 0.1,
            sd_v: 0.1,
            x0: 0.0,
        }
    }
}

impl LinearGenerator {
    pub fn evolution(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x
    }

    pub fn observation(&self, x: f64) -> f64 {
        self.b0 + self.b1 * x
    }

    /// Simulates `T + 1` time points.
    pub fn simulate(&self, horizon: usize, rng: &mut RngStream) -> Result<SimulatedSeries> {
        let mut x = vec![self.x0];
        let mut y = Vec::with_capacity(horizon + 1);
        for _ in 1..=horizon + 1 {
            let prev = *x.last().expect("path starts with x0");
            let xt = draw_normal(self.evolution(prev), self.sd_u, rng)?;
            x.push(xt);
            y.push(draw_normal(self.observation(xt), self.sd_v, rng)?);
        }
        Ok(SimulatedSeries { x, y })
    }
}

/// `x_t = α x_{t-1} + β x_{t-1}/(1 + x²_{t-1}) + γ cos(1.2(t-1)) + u_t`, `y_t = x²_t/20 + v_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthGenerator {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sd_u: f64,
    pub sd_v: f64,
    pub x0: f64,
}

impl Default for GrowthGenerator {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.1,
            gamma: 0.2,
            sd_u: 0.1,
            sd_v: 0.1,
            x0: 0.0,
        }
    }
}

impl GrowthGenerator {
    pub fn evolution(&self, t: usize, x: f64) -> f64 {
        self.alpha * x + self.beta * x / (1.0 + x * x) + self.gamma * (1.2 * (t as f64 - 1.0)).cos()
    }

    pub fn observation(&self, x: f64) -> f64 {
        x * x / 20.0
    }

    pub fn simulate(&self, horizon: usize, rng: &mut RngStream) -> Result<SimulatedSeries> {
        let mut x = vec![self.x0];
        let mut y = Vec::with_capacity(horizon + 1);
        for t in 1..=horizon + 1 {
            let prev = x[t - 1];
            let xt = draw_normal(self.evolution(t, prev), self.sd_u, rng)?;
            x.push(xt);
            y.push(draw_normal(self.observation(xt), self.sd_v, rng)?);
        }
        Ok(SimulatedSeries { x, y })
    }
}

/// Generating parameters for data drawn from the model itself.
#[derive(Clone, Debug, PartialEq)]
pub struct GpTruth {
    pub theta_f: GpParams,
    pub theta_g: GpParams,
    pub s2_eps: f64,
    pub s2_eta: f64,
    pub mu_x0: f64,
    pub s2_x0: f64,
}

impl Default for GpTruth {
    /// `β = (0, 0.01, 0.1)`, `σ_f = σ_g = 0.5`, `σ_ε = σ_η = 0.1`, unit smoothness, `x₀ ~ N(0, 1)`.
    fn default() -> Self {
        let gp = GpParams {
            beta: DVector::from_row_slice(&[0.0, 0.01, 0.1]),
            sigma2: 0.25,
            smooth: Smoothness::new(vec![1.0, 1.0]).expect("positive"),
        };
        Self {
            theta_f: gp.clone(),
            theta_g: gp,
            s2_eps: 0.01,
            s2_eta: 0.01,
            mu_x0: 0.0,
            s2_x0: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpSimulation {
    pub series: SimulatedSeries,
    pub g_x10: f64,
    pub dstar: DVector<f64>,
}

impl GpSimulation {
    /// The full latent state for the first `T` observations.
    pub fn state(&self, truth: &GpTruth) -> LatentState {
        LatentState {
            x: DVector::from_vec(self.series.x.clone()),
            g_x10: self.g_x10,
            dstar: self.dstar.clone(),
            theta_f: truth.theta_f.clone(),
            theta_g: truth.theta_g.clone(),
            s2_eps: truth.s2_eps,
            s2_eta: truth.s2_eta,
        }
    }
}

/// Forward simulation of the model: `x₀`, `g₁₀`, `D* | g₁₀`, the latent path through
/// kriging transitions, and `T + 1` observations drawn jointly.
pub fn simulate_gp_model(truth: &GpTruth, grid: &Grid, horizon: usize, rng: &mut RngStream) -> Result<GpSimulation> {
    if grid.dim() != 1 {
        return Err(Error::invalid(
            "univariate model needs a grid with one latent coordinate",
        ));
    }
    let table = LookupTable::new(grid, &truth.theta_g.smooth)?;
    let x0 = draw_normal(truth.mu_x0, truth.s2_x0.sqrt(), rng)?;
    let aug = table.augmented(x0)?;
    let beta = &truth.theta_g.beta;
    let s2g = truth.theta_g.sigma2;
    let g_x10 = draw_normal(aug.h10.dot(beta), s2g.sqrt(), rng)?;
    let sigma = aug.sigma.l() * aug.sigma.l().transpose() * s2g;
    let dstar = draw_mvn(&table.conditional_mean(&aug, g_x10, beta), &sigma, rng)?;
    let mut state = LatentState {
        x: DVector::zeros(horizon + 2),
        g_x10,
        dstar,
        theta_f: truth.theta_f.clone(),
        theta_g: truth.theta_g.clone(),
        s2_eps: truth.s2_eps,
        s2_eta: truth.s2_eta,
    };
    state.x[0] = x0;
    state.x[1] = draw_normal(g_x10, truth.s2_eta.sqrt(), rng)?;
    let w = table.sys.weights(&state.dstar, beta);
    for t in 1..=horizon {
        let m = table.transition_with_weights(&state, &w, t)?;
        state.x[t + 1] = draw_normal(m.mean, m.var.sqrt(), rng)?;
    }
    let x: Vec<f64> = state.x.iter().copied().collect();
    let points = data_inputs(&state.x, horizon + 1);
    let cov = data_covariance(&points, &truth.theta_f, truth.s2_eps);
    let mean = design_matrix(&points) * &truth.theta_f.beta;
    let y = draw_mvn(&mean, &cov, rng)?;
    Ok(GpSimulation {
        series: SimulatedSeries {
            x,
            y: y.iter().copied().collect(),
        },
        g_x10,
        dstar: state.dstar,
    })
}

/// Joint draw of every unknown and the data from the prior.
pub fn draw_from_prior(
    prior: &PriorSpec,
    grid: &Grid,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<(LatentState, ObservedSeries)> {
    let (theta_f, theta_g, s2_eps, s2_eta) = prior.draw_hyperparameters(rng)?;
    let truth = GpTruth {
        theta_f,
        theta_g,
        s2_eps,
        s2_eta,
        mu_x0: prior.mu_x0,
        s2_x0: prior.s2_x0,
    };
    let sim = simulate_gp_model(&truth, grid, horizon, rng)?;
    Ok((sim.state(&truth), sim.series.observed()))
}

/// Draw `y_1..y_T` given the latent path and `θ_f, σ²_ε`.
pub fn draw_data(state: &LatentState, rng: &mut RngStream) -> Result<ObservedSeries> {
    let horizon = state.horizon();
    let points = data_inputs(&state.x, horizon);
    let cov = data_covariance(&points, &state.theta_f, state.s2_eps);
    let mean = design_matrix(&points) * &state.theta_f.beta;
    ObservedSeries::new(draw_mvn(&mean, &cov, rng)?.iter().copied().collect())
}
