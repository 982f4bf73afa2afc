//! Types and densities of the multivariate model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{corr_matrix, design_matrix, design_vector, Grid, InputPoint, KrigingSystem, Smoothness};
use crate::linalg::{symmetrize, Factor, DEFAULT_JITTER};
use crate::model::{AugmentedTable, LatentState, LookupTable, PriorSpec};
use crate::rng::RngStream;
use crate::stats::{draw_normal, logpdf_inverse_wishart_form, logpdf_lognormal, logpdf_matrix_normal};

/// Coefficients, scale matrix and smoothness of one vector-valued process.
#[derive(Clone, Debug, PartialEq)]
pub struct MvGpParams {
    /// `m x d` coefficient matrix with `m = q + 2`.
    pub b: DMatrix<f64>,
    /// `d x d` cross-covariance of the outputs.
    pub sigma: DMatrix<f64>,
    pub smooth: Smoothness,
}

impl MvGpParams {
    fn check(&self, q: usize, d: usize, name: &str) -> Result<()> {
        if self.b.shape() != (q + 2, d) || self.sigma.shape() != (d, d) || self.smooth.len() != q + 1 {
            return Err(Error::invalid(format!("{name} has the wrong dimensions")));
        }
        Ok(())
    }

    /// `(a, b)` with `Bᵀh(t, x) = a (1, t)ᵀ + b x`.
    pub fn affine(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let bt = self.b.transpose();
        let m = bt.ncols();
        (bt.columns(0, 2).into_owned(), bt.columns(2, m - 2).into_owned())
    }
}

/// Observations `y_1..y_T` as a `T x p` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MvObservedSeries {
    y: DMatrix<f64>,
}

impl MvObservedSeries {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::invalid("series needs at least one row and one column"));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("observation {} is not finite", i + 1)));
        }
        Ok(Self { y })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// `y_t` for `1 <= t <= T`.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.y.row(t - 1).transpose()
    }

    /// `(y_1ᵀ, …, y_Tᵀ)ᵀ`.
    pub fn stacked(&self) -> DVector<f64> {
        stack_rows(&self.y)
    }

    pub fn appended(&self, v: &DVector<f64>) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::invalid("appended observation has the wrong dimension"));
        }
        let mut y = self.y.clone().insert_row(self.len(), 0.0);
        y.row_mut(self.len()).copy_from(&v.transpose());
        Self::new(y)
    }
}

/// Rows of `m` concatenated into one vector.
pub(crate) fn stack_rows(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.len(),
        (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])),
    )
}

/// Column covariance of the matrix-normal prior on `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BPriorScale {
    /// `ψ Σ`, tied to the process scale matrix.
    Conditional,
    /// `ψ I`, independent of the process scale matrix.
    Fixed,
}

/// Prior hyperparameters of the multivariate model. Covariance priors have the
/// inverse-Wishart form `|Σ|^-(ν+d+1)/2 exp(-tr(Σ⁻¹Σ₀)/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MvPriorSpec {
    pub nu_eps: f64,
    pub sigma_eps0: DMatrix<f64>,
    pub nu_eta: f64,
    pub sigma_eta0: DMatrix<f64>,
    pub nu_f: f64,
    pub sigma_f0: DMatrix<f64>,
    pub nu_g: f64,
    pub sigma_g0: DMatrix<f64>,
    pub b_f0: DMatrix<f64>,
    pub sigma_bf0: DMatrix<f64>,
    pub b_g0: DMatrix<f64>,
    pub sigma_bg0: DMatrix<f64>,
    pub psi: f64,
    pub b_prior_scale: BPriorScale,
    /// Log-normal location and variance of each of the `q + 1` smoothness entries.
    pub mu_r_f: Vec<f64>,
    pub s2_r_f: Vec<f64>,
    pub mu_r_g: Vec<f64>,
    pub s2_r_g: Vec<f64>,
    pub mu_x0: DVector<f64>,
    pub sigma_x0: DMatrix<f64>,
}

/// Which of the four covariance matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovKind {
    F,
    G,
    Eps,
    Eta,
}

impl CovKind {
    pub const ALL: [CovKind; 4] = [CovKind::F, CovKind::G, CovKind::Eps, CovKind::Eta];
}

impl MvPriorSpec {
    /// `ψ = 1`, `B₀ = 0`, `Σ_B0 = I`, `ν` equal to the dimension, `Σ_ε0 = Σ_η0 = 0.1 I`,
    /// `Σ_f0 = Σ_g0 = 0.5 I`, smoothness log-normal(-0.5, 1), `x₀ ~ N(0, I)`.
    pub fn new(p: usize, q: usize) -> Self {
        let m = q + 2;
        Self {
            nu_eps: p as f64,
            sigma_eps0: DMatrix::identity(p, p) * 0.1,
            nu_eta: q as f64,
            sigma_eta0: DMatrix::identity(q, q) * 0.1,
            nu_f: p as f64,
            sigma_f0: DMatrix::identity(p, p) * 0.5,
            nu_g: q as f64,
            sigma_g0: DMatrix::identity(q, q) * 0.5,
            b_f0: DMatrix::zeros(m, p),
            sigma_bf0: DMatrix::identity(m, m),
            b_g0: DMatrix::zeros(m, q),
            sigma_bg0: DMatrix::identity(m, m),
            psi: 1.0,
            b_prior_scale: BPriorScale::Conditional,
            mu_r_f: vec![-0.5; q + 1],
            s2_r_f: vec![1.0; q + 1],
            mu_r_g: vec![-0.5; q + 1],
            s2_r_g: vec![1.0; q + 1],
            mu_x0: DVector::zeros(q),
            sigma_x0: DMatrix::identity(q, q),
        }
    }

    /// The `p = q = 1` prior with the same density as a univariate prior:
    /// `ν = α`, `Σ₀ = γ`, and `B ~ N(β₀, Σ_β0)` independent of the process scale.
    pub fn from_univariate(prior: &PriorSpec) -> Self {
        let m1 = |v: f64| DMatrix::from_element(1, 1, v);
        Self {
            nu_eps: prior.alpha_eps,
            sigma_eps0: m1(prior.gamma_eps),
            nu_eta: prior.alpha_eta,
            sigma_eta0: m1(prior.gamma_eta),
            nu_f: prior.alpha_f,
            sigma_f0: m1(prior.gamma_f),
            nu_g: prior.alpha_g,
            sigma_g0: m1(prior.gamma_g),
            b_f0: DMatrix::from_column_slice(3, 1, prior.beta_f0.as_slice()),
            sigma_bf0: prior.sigma_beta_f0.clone(),
            b_g0: DMatrix::from_column_slice(3, 1, prior.beta_g0.as_slice()),
            sigma_bg0: prior.sigma_beta_g0.clone(),
            psi: 1.0,
            b_prior_scale: BPriorScale::Fixed,
            mu_r_f: prior.mu_r_f.to_vec(),
            s2_r_f: prior.s2_r_f.to_vec(),
            mu_r_g: prior.mu_r_g.to_vec(),
            s2_r_g: prior.s2_r_g.to_vec(),
            mu_x0: DVector::from_element(1, prior.mu_x0),
            sigma_x0: m1(prior.s2_x0),
        }
    }

    pub fn p(&self) -> usize {
        self.sigma_eps0.nrows()
    }

    pub fn q(&self) -> usize {
        self.sigma_eta0.nrows()
    }

    pub fn cov_prior(&self, kind: CovKind) -> (f64, &DMatrix<f64>) {
        match kind {
            CovKind::F => (self.nu_f, &self.sigma_f0),
            CovKind::G => (self.nu_g, &self.sigma_g0),
            CovKind::Eps => (self.nu_eps, &self.sigma_eps0),
            CovKind::Eta => (self.nu_eta, &self.sigma_eta0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.p(), self.q());
        let m = q + 2;
        if p == 0 || q == 0 {
            return Err(Error::invalid("dimensions p and q must be at least 1"));
        }
        for (name, kind, d) in [
            ("eps", CovKind::Eps, p),
            ("eta", CovKind::Eta, q),
            ("f", CovKind::F, p),
            ("g", CovKind::G, q),
        ] {
            let (nu, s0) = self.cov_prior(kind);
            if s0.shape() != (d, d) {
                return Err(Error::invalid(format!("prior Sigma_{name}0 must be {d}x{d}")));
            }
            if !(nu > d as f64 - 1.0) || !nu.is_finite() {
                return Err(Error::invalid(format!(
                    "prior nu_{name} must exceed {}, got {nu}",
                    d - 1
                )));
            }
            Factor::cholesky(s0, &format!("prior Sigma_{name}0"))?;
        }
        if !(self.psi > 0.0) || !self.psi.is_finite() {
            return Err(Error::invalid(format!("psi must be positive, got {}", self.psi)));
        }
        for (name, b0, sb, d) in [
            ("f", &self.b_f0, &self.sigma_bf0, p),
            ("g", &self.b_g0, &self.sigma_bg0, q),
        ] {
            if b0.shape() != (m, d) || sb.shape() != (m, m) {
                return Err(Error::invalid(format!("prior of B_{name} has the wrong dimensions")));
            }
            Factor::cholesky(sb, &format!("prior row covariance of B_{name}"))?;
        }
        for (name, mu, s2) in [("f", &self.mu_r_f, &self.s2_r_f), ("g", &self.mu_r_g, &self.s2_r_g)] {
            if mu.len() != q + 1 || s2.len() != q + 1 {
                return Err(Error::invalid(format!(
                    "smoothness prior of {name} needs {} entries",
                    q + 1
                )));
            }
            if s2.iter().any(|v| !(*v > 0.0)) || mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("smoothness prior of {name} is invalid")));
            }
        }
        if self.mu_x0.len() != q || self.sigma_x0.shape() != (q, q) {
            return Err(Error::invalid("prior of x0 has the wrong dimensions"));
        }
        Factor::cholesky(&self.sigma_x0, "prior covariance of x0")?;
        Ok(())
    }

    /// Prior mean of an inverse-Wishart-form covariance, or its mode if the mean is undefined.
    pub fn cov_center(nu: f64, s0: &DMatrix<f64>) -> DMatrix<f64> {
        let d = s0.nrows() as f64;
        if nu > d + 1.0 {
            s0 / (nu - d - 1.0)
        } else {
            s0 / (nu + d + 1.0)
        }
    }

    /// Column covariance of the prior on `B` given the process scale matrix.
    pub fn b_column_cov(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        match self.b_prior_scale {
            BPriorScale::Conditional => sigma * self.psi,
            BPriorScale::Fixed => DMatrix::identity(sigma.nrows(), sigma.nrows()) * self.psi,
        }
    }

    pub fn log_b_prior(&self, side: Side, theta: &MvGpParams) -> Result<f64> {
        let (b0, sb) = match side {
            Side::F => (&self.b_f0, &self.sigma_bf0),
            Side::G => (&self.b_g0, &self.sigma_bg0),
        };
        let u = Factor::cholesky(sb, "prior row covariance of B")?;
        let v = match Factor::cholesky(&self.b_column_cov(&theta.sigma), "prior column covariance of B") {
            Ok(v) => v,
            Err(_) => return Ok(f64::NEG_INFINITY),
        };
        Ok(logpdf_matrix_normal(&theta.b, b0, &u, &v))
    }

    pub fn log_cov_prior(&self, kind: CovKind, state: &MvLatentState) -> f64 {
        let (nu, s0) = self.cov_prior(kind);
        logpdf_inverse_wishart_form(state.cov(kind), nu, s0)
    }

    pub fn log_smooth_prior(&self, side: Side, i: usize, r: f64) -> f64 {
        match side {
            Side::F => logpdf_lognormal(r, self.mu_r_f[i], self.s2_r_f[i]),
            Side::G => logpdf_lognormal(r, self.mu_r_g[i], self.s2_r_g[i]),
        }
    }

    /// Log prior of the hyperparameters (the `x₀` prior is part of the latent density).
    pub fn log_prior(&self, state: &MvLatentState) -> Result<f64> {
        let mut lp = 0.0;
        for kind in CovKind::ALL {
            lp += self.log_cov_prior(kind, state);
        }
        for side in [Side::F, Side::G] {
            let th = state.theta(side);
            for (i, r) in th.smooth.as_slice().iter().enumerate() {
                lp += self.log_smooth_prior(side, i, *r);
            }
            lp += self.log_b_prior(side, th)?;
        }
        Ok(lp)
    }
}

/// Observation (`f`) or evolution (`g`) process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    F,
    G,
}

/// Every unknown of the multivariate model.
#[derive(Clone, Debug, PartialEq)]
pub struct MvLatentState {
    /// Rows `x_0ᵀ, …, x_{T+1}ᵀ`.
    pub x: DMatrix<f64>,
    pub g_x10: DVector<f64>,
    /// `n x q` look-up table.
    pub dstar: DMatrix<f64>,
    pub theta_f: MvGpParams,
    pub theta_g: MvGpParams,
    pub sigma_eps: DMatrix<f64>,
    pub sigma_eta: DMatrix<f64>,
}

impl MvLatentState {
    pub fn horizon(&self) -> usize {
        self.x.nrows() - 2
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.sigma_eps.nrows()
    }

    pub fn x_at(&self, t: usize) -> DVector<f64> {
        self.x.row(t).transpose()
    }

    pub fn set_x(&mut self, t: usize, v: &DVector<f64>) {
        self.x.row_mut(t).copy_from(&v.transpose());
    }

    /// Input `(time, x_row)`.
    pub fn input(&self, time: usize, row: usize) -> InputPoint {
        InputPoint::new(time as f64, self.x.row(row).iter().copied().collect())
    }

    pub fn theta(&self, side: Side) -> &MvGpParams {
        match side {
            Side::F => &self.theta_f,
            Side::G => &self.theta_g,
        }
    }

    pub fn theta_mut(&mut self, side: Side) -> &mut MvGpParams {
        match side {
            Side::F => &mut self.theta_f,
            Side::G => &mut self.theta_g,
        }
    }

    pub fn cov(&self, kind: CovKind) -> &DMatrix<f64> {
        match kind {
            CovKind::F => &self.theta_f.sigma,
            CovKind::G => &self.theta_g.sigma,
            CovKind::Eps => &self.sigma_eps,
            CovKind::Eta => &self.sigma_eta,
        }
    }

    pub fn cov_mut(&mut self, kind: CovKind) -> &mut DMatrix<f64> {
        match kind {
            CovKind::F => &mut self.theta_f.sigma,
            CovKind::G => &mut self.theta_g.sigma,
            CovKind::Eps => &mut self.sigma_eps,
            CovKind::Eta => &mut self.sigma_eta,
        }
    }

    pub fn validate(&self, y: &MvObservedSeries, grid: &Grid) -> Result<()> {
        let (p, q) = (y.dim(), self.q());
        if grid.dim() != q {
            return Err(Error::invalid(format!(
                "grid has {} latent coordinates, state has {q}",
                grid.dim()
            )));
        }
        if self.x.nrows() != y.len() + 2 {
            return Err(Error::invalid(format!(
                "latent path has {} rows, expected T + 2 = {}",
                self.x.nrows(),
                y.len() + 2
            )));
        }
        if self.g_x10.len() != q || self.dstar.shape() != (grid.len(), q) {
            return Err(Error::invalid(
                "look-up table does not match the grid and state dimension",
            ));
        }
        self.theta_f.check(q, p, "theta_f")?;
        self.theta_g.check(q, q, "theta_g")?;
        if self.sigma_eps.shape() != (p, p) || self.sigma_eta.shape() != (q, q) {
            return Err(Error::invalid("noise covariances have the wrong dimensions"));
        }
        Ok(())
    }

    /// The `p = q = 1` state carrying the same values as a univariate state.
    pub fn from_univariate(state: &LatentState) -> Self {
        let gp = |th: &crate::kernel::GpParams| MvGpParams {
            b: DMatrix::from_column_slice(3, 1, th.beta.as_slice()),
            sigma: DMatrix::from_element(1, 1, th.sigma2),
            smooth: th.smooth.clone(),
        };
        Self {
            x: DMatrix::from_column_slice(state.x.len(), 1, state.x.as_slice()),
            g_x10: DVector::from_element(1, state.g_x10),
            dstar: DMatrix::from_column_slice(state.dstar.len(), 1, state.dstar.as_slice()),
            theta_f: gp(&state.theta_f),
            theta_g: gp(&state.theta_g),
            sigma_eps: DMatrix::from_element(1, 1, state.s2_eps),
            sigma_eta: DMatrix::from_element(1, 1, state.s2_eta),
        }
    }

    /// Names of the entries returned by [`MvLatentState::to_row`]. Matrices are
    /// listed row by row; covariances by their lower triangle.
    pub fn column_names(horizon: usize, n: usize, p: usize, q: usize) -> Vec<String> {
        let m = q + 2;
        let mut c = Vec::new();
        for t in 0..=horizon + 1 {
            c.extend((1..=q).map(|j| format!("x_{t}_{j}")));
        }
        c.extend((1..=q).map(|j| format!("g_x10_{j}")));
        for i in 1..=n {
            c.extend((1..=q).map(|j| format!("dstar_{i}_{j}")));
        }
        for (side, d) in [("f", p), ("g", q)] {
            for i in 0..m {
                c.extend((1..=d).map(|j| format!("B_{side}_{i}_{j}")));
            }
            c.extend(lower_names(&format!("Sigma_{side}"), d));
            c.extend((1..=q + 1).map(|i| format!("r_{side}_{i}")));
        }
        c.extend(lower_names("Sigma_eps", p));
        c.extend(lower_names("Sigma_eta", q));
        c
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut r: Vec<f64> = stack_rows(&self.x).iter().copied().collect();
        r.extend(self.g_x10.iter());
        r.extend(stack_rows(&self.dstar).iter());
        for th in [&self.theta_f, &self.theta_g] {
            r.extend(stack_rows(&th.b).iter());
            r.extend(lower(&th.sigma));
            r.extend(th.smooth.as_slice());
        }
        r.extend(lower(&self.sigma_eps));
        r.extend(lower(&self.sigma_eta));
        r
    }

    pub fn from_row(row: &[f64], horizon: usize, n: usize, p: usize, q: usize) -> Result<Self> {
        let m = q + 2;
        let tri = |d: usize| d * (d + 1) / 2;
        let expect =
            (horizon + 2) * q + q + n * q + m * p + tri(p) + (q + 1) + m * q + tri(q) + (q + 1) + tri(p) + tri(q);
        if row.len() != expect {
            return Err(Error::invalid(format!(
                "state row has {} values, expected {expect}",
                row.len()
            )));
        }
        let mut it = row.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let x = DMatrix::from_row_slice(horizon + 2, q, &take((horizon + 2) * q));
        let g_x10 = DVector::from_vec(take(q));
        let dstar = DMatrix::from_row_slice(n, q, &take(n * q));
        let mut gp = |d: usize| -> Result<MvGpParams> {
            let b = DMatrix::from_row_slice(m, d, &take(m * d));
            let sigma = from_lower(&take(tri(d)), d);
            let smooth = Smoothness::new(take(q + 1))?;
            Ok(MvGpParams { b, sigma, smooth })
        };
        let theta_f = gp(p)?;
        let theta_g = gp(q)?;
        let sigma_eps = from_lower(&take(tri(p)), p);
        let sigma_eta = from_lower(&take(tri(q)), q);
        Ok(Self {
            x,
            g_x10,
            dstar,
            theta_f,
            theta_g,
            sigma_eps,
            sigma_eta,
        })
    }
}

fn lower_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d)
        .flat_map(|i| (1..=i).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

fn lower(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..=i).map(move |j| m[(i, j)])).collect()
}

fn from_lower(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Inputs `(t, x_t)` for `t = 1..T`.
pub fn mv_data_inputs(x: &DMatrix<f64>, horizon: usize) -> Vec<InputPoint> {
    (1..=horizon)
        .map(|t| InputPoint::new(t as f64, x.row(t).iter().copied().collect()))
        .collect()
}

/// `A_f ⊗ Σ_f + I_T ⊗ Σ_ε` on the stacked observations.
pub fn mv_data_covariance(points: &[InputPoint], theta_f: &MvGpParams, sigma_eps: &DMatrix<f64>) -> DMatrix<f64> {
    let a = corr_matrix(points, &theta_f.smooth, DEFAULT_JITTER);
    let eye = DMatrix::<f64>::identity(points.len(), points.len());
    a.kronecker(&theta_f.sigma) + eye.kronecker(sigma_eps)
}

/// Stacked mean `(B_fᵀh(1, x₁), …, B_fᵀh(T, x_T))`.
pub fn mv_data_mean(points: &[InputPoint], b: &DMatrix<f64>) -> DVector<f64> {
    stack_rows(&(design_matrix(points) * b))
}

/// Log density of the stacked observations, factorized densely.
pub fn mv_loglik_data(
    y: &MvObservedSeries,
    x: &DMatrix<f64>,
    theta_f: &MvGpParams,
    sigma_eps: &DMatrix<f64>,
) -> Result<f64> {
    let horizon = y.len();
    if x.nrows() < horizon + 1 {
        return Err(Error::invalid("latent path is shorter than the series"));
    }
    if theta_f.b.ncols() != y.dim() || sigma_eps.shape() != (y.dim(), y.dim()) {
        return Err(Error::invalid(
            "observation parameters do not match the series dimension",
        ));
    }
    let points = mv_data_inputs(x, horizon);
    let v = mv_data_covariance(&points, theta_f, sigma_eps);
    let f = Factor::cholesky(&v, "multivariate data covariance")?;
    Ok(f.log_normal_density(&(y.stacked() - mv_data_mean(&points, &theta_f.b))))
}

/// Conditional mean and covariance of a vector-valued kriging prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct MvMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `A⁻¹(values - H B)`, one column per output.
pub fn mv_weights(sys: &KrigingSystem, values: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    sys.factor().solve_mat(&(values - sys.design() * b))
}

/// `mean = Bᵀh(z) + Wᵀs(z)` and `cov = (1 - sᵀA⁻¹s) Σ + noise`, with the scalar kriging
/// weight shared across outputs. A zero `Σ` gives the regression mean.
pub fn mv_moments_with_weights(
    sys: &KrigingSystem,
    z: &InputPoint,
    weights: &DMatrix<f64>,
    theta: &MvGpParams,
    noise: &DMatrix<f64>,
) -> Result<MvMoments> {
    let h = design_vector(z);
    let reg = theta.b.transpose() * h;
    if theta.sigma.iter().all(|v| *v == 0.0) {
        return Ok(MvMoments {
            mean: reg,
            cov: noise.clone(),
        });
    }
    let s = sys.cross_corr(z);
    let explained = sys.factor().quad(&s);
    let k = 1.0 - explained;
    if k < -1e-8 || !k.is_finite() {
        return Err(Error::NumericalDegeneracy(format!(
            "kriging variance factor {k} is negative"
        )));
    }
    Ok(MvMoments {
        mean: reg + weights.transpose() * s,
        cov: symmetrize(&(&theta.sigma * k.max(0.0) + noise)),
    })
}

/// Kriging moments at `z` from table values `dstar` (`n x q`) on `grid`.
pub fn mv_kriging_moments(
    z: &InputPoint,
    grid: &Grid,
    dstar: &DMatrix<f64>,
    theta: &MvGpParams,
    noise: &DMatrix<f64>,
) -> Result<MvMoments> {
    if dstar.nrows() != grid.len() || dstar.ncols() != theta.b.ncols() {
        return Err(Error::invalid(
            "table values do not match the grid and output dimension",
        ));
    }
    let sys = KrigingSystem::new(
        grid.points().to_vec(),
        theta.smooth.clone(),
        "look-up table correlation",
    )?;
    let w = mv_weights(&sys, dstar, &theta.b);
    mv_moments_with_weights(&sys, z, &w, theta, noise)
}

pub(crate) fn logpdf_mvn(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, block: &str) -> Result<f64> {
    Ok(Factor::cholesky(cov, block)?.log_normal_density(&(x - mean)))
}

/// Augmented table quantities at `x*_{1,0} = (1, x₀)`.
pub fn mv_augmented(table: &LookupTable, state: &MvLatentState) -> Result<AugmentedTable> {
    table.augmented_at(&state.input(1, 0))
}

/// Mean of `D* | g₁₀`: `H B + s₁₀ (g₁₀ᵀ - h₁₀ᵀ B)`.
pub fn mv_conditional_mean(
    table: &LookupTable,
    aug: &AugmentedTable,
    g_x10: &DVector<f64>,
    b: &DMatrix<f64>,
) -> DMatrix<f64> {
    let gb = g_x10.transpose() - aug.h10.transpose() * b;
    table.system().design() * b + &aug.s10 * gb
}

/// `log N_q(g₁₀; Bᵀh₁₀, Σ_g) + log MN(D*; μ_{g,D*}, Σ_{g,D*}, Σ_g)`.
pub fn mv_log_g_block(state: &MvLatentState, table: &LookupTable, aug: &AugmentedTable) -> Result<f64> {
    let th = &state.theta_g;
    let v = Factor::cholesky(&th.sigma, "Sigma_g")?;
    let mean10 = th.b.transpose() * &aug.h10;
    let mut lp = v.log_normal_density(&(&state.g_x10 - mean10));
    let m = mv_conditional_mean(table, aug, &state.g_x10, &th.b);
    lp += logpdf_matrix_normal(&state.dstar, &m, &aug.sigma, &v);
    Ok(lp)
}

/// `log N_q(x₁; g₁₀, Σ_η)`.
pub fn mv_log_x1(state: &MvLatentState) -> Result<f64> {
    logpdf_mvn(&state.x_at(1), &state.g_x10, &state.sigma_eta, "Sigma_eta")
}

/// Moments of `x_{t+1} | x_t, D*` given table weights.
pub fn mv_transition(
    state: &MvLatentState,
    table: &LookupTable,
    weights: &DMatrix<f64>,
    t: usize,
) -> Result<MvMoments> {
    mv_moments_with_weights(
        table.system(),
        &state.input(t + 1, t),
        weights,
        &state.theta_g,
        &state.sigma_eta,
    )
}

/// `Σ_{t ∈ ts} log N_q(x_{t+1}; μ_t, Σ_t)`.
pub fn mv_log_transitions(
    state: &MvLatentState,
    table: &LookupTable,
    ts: impl IntoIterator<Item = usize>,
) -> Result<f64> {
    let w = mv_weights(table.system(), &state.dstar, &state.theta_g.b);
    let mut acc = 0.0;
    for t in ts {
        let m = mv_transition(state, table, &w, t)?;
        acc += logpdf_mvn(&state.x_at(t + 1), &m.mean, &m.cov, "transition covariance")?;
    }
    Ok(acc)
}

/// `[x₀][g₁₀ | x₀][D* | g₁₀, x₀][x₁ | g₁₀] Π_{t=1..T} [x_{t+1} | x_t, D*]`.
pub fn mv_logjoint_latent_with(state: &MvLatentState, table: &LookupTable, prior: &MvPriorSpec) -> Result<f64> {
    let aug = mv_augmented(table, state)?;
    let mut lp = logpdf_mvn(&state.x_at(0), &prior.mu_x0, &prior.sigma_x0, "prior covariance of x0")?;
    lp += mv_log_g_block(state, table, &aug)?;
    lp += mv_log_x1(state)?;
    lp += mv_log_transitions(state, table, 1..=state.horizon())?;
    Ok(lp)
}

/// Unnormalized log posterior.
pub fn mv_log_posterior(
    state: &MvLatentState,
    y: &MvObservedSeries,
    table: &LookupTable,
    prior: &MvPriorSpec,
) -> Result<f64> {
    Ok(prior.log_prior(state)?
        + mv_logjoint_latent_with(state, table, prior)?
        + mv_loglik_data(y, &state.x, &state.theta_f, &state.sigma_eps)?)
}

/// A simulated multivariate path with one held-out time point.
#[derive(Clone, Debug, PartialEq)]
pub struct MvSimulatedSeries {
    /// Rows `x_0..x_{T+1}`.
    pub x: DMatrix<f64>,
    /// Rows `y_1..y_{T+1}`.
    pub y: DMatrix<f64>,
}

impl MvSimulatedSeries {
    pub fn horizon(&self) -> usize {
        self.y.nrows() - 1
    }

    pub fn observed(&self) -> MvObservedSeries {
        MvObservedSeries::new(self.y.rows(0, self.horizon()).into_owned()).expect("simulated values are finite")
    }

    pub fn held_out_y(&self) -> DVector<f64> {
        self.y.row(self.horizon()).transpose()
    }
}

/// Four-coordinate growth model: two growth-type coordinates, one linear and one
/// pure forcing coordinate, each observed through `x²/20`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cps4Generator {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub var_u: f64,
    pub var_v: f64,
    pub x0: [f64; 4],
}

impl Default for Cps4Generator {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.1,
            gamma: 0.2,
            var_u: 0.1,
            var_v: 0.1,
            x0: [0.0; 4],
        }
    }
}

impl Cps4Generator {
    pub fn evolution(&self, t: usize, x: &[f64; 4]) -> [f64; 4] {
        let force = self.gamma * (1.2 * (t as f64 - 1.0)).cos();
        let growth = |v: f64| self.alpha * v + self.beta * v / (1.0 + v * v);
        [growth(x[0]) + force, growth(x[1]), self.alpha + self.beta * x[2], force]
    }

    pub fn observation(&self, x: f64) -> f64 {
        x * x / 20.0
    }

    /// Simulates `T + 1` time points.
    pub fn simulate(&self, horizon: usize, rng: &mut RngStream) -> Result<MvSimulatedSeries> {
        let (su, sv) = (self.var_u.sqrt(), self.var_v.sqrt());
        let mut x = DMatrix::zeros(horizon + 2, 4);
        let mut y = DMatrix::zeros(horizon + 1, 4);
        let mut prev = self.x0;
        for j in 0..4 {
            x[(0, j)] = prev[j];
        }
        for t in 1..=horizon + 1 {
            let mean = self.evolution(t, &prev);
            for j in 0..4 {
                prev[j] = draw_normal(mean[j], su, rng)?;
                x[(t, j)] = prev[j];
            }
            for j in 0..4 {
                y[(t - 1, j)] = draw_normal(self.observation(prev[j]), sv, rng)?;
            }
        }
        Ok(MvSimulatedSeries { x, y })
    }
}
