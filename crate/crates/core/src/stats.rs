//! Random draws, log densities and highest-posterior-density intervals.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::linalg::{add_jitter, Factor, DEFAULT_JITTER};
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn draw_normal(mean: f64, sd: f64, rng: &mut RngStream) -> Result<f64> {
    if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
        return Err(Error::invalid(format!("normal draw with mean {mean}, sd {sd}")));
    }
    Ok(mean + sd * rng.std_normal())
}

fn check_square(m: &DMatrix<f64>, k: usize, what: &str) -> Result<()> {
    if m.nrows() != k || m.ncols() != k {
        return Err(Error::invalid(format!(
            "{what} is {}x{}, expected {k}x{k}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..k {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Factor for sampling: semidefinite first, then with diagonal jitter.
fn sampling_factor(cov: &DMatrix<f64>, block: &str) -> Result<Factor> {
    if let Ok(f) = Factor::semidefinite(cov, block) {
        return Ok(f);
    }
    let scale = (0..cov.nrows()).map(|i| cov[(i, i)].abs()).fold(1.0, f64::max);
    Factor::semidefinite(&add_jitter(cov, DEFAULT_JITTER * scale), block)
}

/// Draw from `N_k(mean, cov)` as `mean + L z`, with `z` drawn in index order.
pub fn draw_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
    let k = mean.len();
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("mvn mean has non-finite entries"));
    }
    check_square(cov, k, "mvn covariance")?;
    let f = sampling_factor(cov, "mvn covariance")?;
    let z = DVector::from_fn(k, |_, _| rng.std_normal());
    Ok(f.mul_l(&z) + mean)
}

/// Draw `X = M + L_U Z L_Vᵀ`, so that `vec(X) ~ N(vec(M), V ⊗ U)`.
///
/// `u` is the row covariance (`n x n`) and `v` the column covariance (`d x d`).
pub fn draw_matrix_normal(
    m: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let (n, d) = m.shape();
    check_square(u, n, "matrix-normal row covariance")?;
    check_square(v, d, "matrix-normal column covariance")?;
    let lu = sampling_factor(u, "matrix-normal row covariance")?;
    let lv = sampling_factor(v, "matrix-normal column covariance")?;
    let mut z = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = rng.std_normal();
        }
    }
    Ok(m + lu.l() * z * lv.l().transpose())
}

/// Matrix-normal log density with row covariance `u` and column covariance `v`.
pub fn logpdf_matrix_normal(x: &DMatrix<f64>, m: &DMatrix<f64>, u: &Factor, v: &Factor) -> f64 {
    let (n, d) = x.shape();
    let r = x - m;
    let uinv_r = u.solve_mat(&r);
    let inner = r.transpose() * uinv_r;
    let tr = v.solve_mat(&inner).trace();
    -0.5 * ((n * d) as f64 * LN_2PI + d as f64 * u.log_det() + n as f64 * v.log_det() + tr)
}

pub fn logpdf_normal(x: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return f64::NEG_INFINITY;
    }
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// `-((α+2)/2) log σ² - γ/(2σ²)`, the inverse-gamma prior used for every variance.
///
/// This is the kernel of an inverse gamma with shape `α/2` and scale `γ/2`.
pub fn logpdf_inverse_gamma_form(s2: f64, alpha: f64, gamma: f64) -> f64 {
    if !(s2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    -0.5 * (alpha + 2.0) * s2.ln() - gamma / (2.0 * s2)
}

/// Log-normal log density of `r` with log-scale mean `mu` and variance `s2`.
pub fn logpdf_lognormal(r: f64, mu: f64, s2: f64) -> f64 {
    if !(r > 0.0) {
        return f64::NEG_INFINITY;
    }
    let lr = r.ln();
    -lr - 0.5 * (LN_2PI + s2.ln()) - (lr - mu) * (lr - mu) / (2.0 * s2)
}

/// `-((ν+d+1)/2) log|S| - tr(S⁻¹ S₀)/2`; `-∞` if `S` is not positive definite.
pub fn logpdf_inverse_wishart_form(s: &DMatrix<f64>, nu: f64, s0: &DMatrix<f64>) -> f64 {
    let d = s.nrows();
    match Factor::cholesky(s, "inverse-wishart argument") {
        Ok(f) => -0.5 * (nu + d as f64 + 1.0) * f.log_det() - 0.5 * f.solve_mat(s0).trace(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Inverse gamma with density proportional to `s^-(shape+1) exp(-scale/s)`.
pub fn draw_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "inverse gamma with shape {shape}, scale {scale}"
        )));
    }
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(scale / g.sample(rng))
}

/// Inverse Wishart with density proportional to `|Σ|^-(df+d+1)/2 exp(-tr(S Σ⁻¹)/2)`.
pub fn draw_inverse_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    check_square(scale, d, "inverse-wishart scale")?;
    if !(df > d as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "inverse wishart needs df > {}, got {df}",
            d - 1
        )));
    }
    let sinv = Factor::cholesky(scale, "inverse-wishart scale")?.inverse();
    let l = Factor::cholesky(&crate::linalg::symmetrize(&sinv), "inverse-wishart scale")?;
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let g = Gamma::new((df - i as f64) / 2.0, 2.0).map_err(|e| Error::invalid(e.to_string()))?;
        a[(i, i)] = g.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.std_normal();
        }
    }
    let la = l.l() * a;
    let w = &la * la.transpose();
    Ok(crate::linalg::symmetrize(
        &Factor::cholesky(&w, "wishart draw")?.inverse(),
    ))
}

/// Shortest interval containing `ceil(mass * N)` order statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HpdInterval {
    pub lo: f64,
    pub hi: f64,
    /// Fraction of samples inside `[lo, hi]`.
    pub mass: f64,
}

impl HpdInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub const MIN_HPD_SAMPLES: usize = 20;

/// Empirical HPD interval; ties between equally short windows go to the lowest start.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<HpdInterval> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid(format!("hpd mass must be in (0, 1), got {mass}")));
    }
    if samples.len() < MIN_HPD_SAMPLES {
        return Err(Error::invalid(format!(
            "hpd needs at least {MIN_HPD_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("hpd samples contain non-finite values"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=(n - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok(HpdInterval {
        lo: sorted[best],
        hi: sorted[best + k - 1],
        mass: k as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hpd_on_integers() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let h = hpd_interval(&s, 0.95).unwrap();
        assert_eq!((h.lo, h.hi), (1.0, 95.0));
        assert!((h.mass - 0.95).abs() <= 0.01);
    }

    #[test]
    fn hpd_rejects_small_samples() {
        let s = vec![1.0; 10];
        assert!(matches!(hpd_interval(&s, 0.9), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_cov_returns_mean() {
        let mut rng = RngStream::new(1, 0);
        let m = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let x = draw_mvn(&m, &DMatrix::zeros(3, 3), &mut rng).unwrap();
        assert_eq!(x, m);
    }

    #[test]
    fn diagonal_mvn_matches_sequential_normals() {
        let m = DVector::from_vec(vec![1.0, -3.0, 0.5, 7.0]);
        let var = [0.5, 2.0, 1e-3, 4.0];
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&var));
        let mut a = RngStream::new(9, 4);
        let mut b = RngStream::new(9, 4);
        let x = draw_mvn(&m, &cov, &mut a).unwrap();
        for i in 0..4 {
            let v = draw_normal(m[i], var[i].sqrt(), &mut b).unwrap();
            assert_eq!(x[i].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn draw_normal_rejects_nonfinite() {
        let mut rng = RngStream::new(1, 0);
        assert!(draw_normal(f64::NAN, 1.0, &mut rng).is_err());
        assert!(draw_normal(0.0, f64::INFINITY, &mut rng).is_err());
        assert!(draw_normal(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn mvn_moments() {
        let mut rng = RngStream::new(3, 0);
        let m = DVector::from_vec(vec![1.0, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let n = 40_000;
        let mut s = DVector::zeros(2);
        let mut ss = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = draw_mvn(&m, &cov, &mut rng).unwrap();
            s += &x;
            ss += &x * x.transpose();
        }
        let mean = s / n as f64;
        let c = ss / n as f64 - &mean * mean.transpose();
        assert!((mean - m).amax() < 0.03);
        assert!((c - cov).amax() < 0.05);
    }

    #[test]
    fn inverse_gamma_form_matches_closed_form_differences() {
        // Kernel of IG(shape a/2, scale g/2): differences are free of the normalizer.
        let (alpha, gamma) = (4.01, 1.005);
        let dens = |s: f64| -(alpha / 2.0 + 1.0) * s.ln() - (gamma / 2.0) / s;
        for (a, b) in [(0.3, 1.7), (0.05, 2.0), (1.0, 1.0)] {
            let lhs = logpdf_inverse_gamma_form(a, alpha, gamma) - logpdf_inverse_gamma_form(b, alpha, gamma);
            assert!((lhs - (dens(a) - dens(b))).abs() < 1e-12);
        }
        assert_eq!(logpdf_inverse_gamma_form(0.0, alpha, gamma), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_draw_mean() {
        let mut rng = RngStream::new(5, 0);
        let (a, b) = (6.0, 2.5);
        let n = 50_000;
        let m: f64 = (0..n).map(|_| draw_inverse_gamma(a, b, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((m - b / (a - 1.0)).abs() < 0.01);
    }

    #[test]
    fn inverse_wishart_form_singular_is_neg_inf() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            logpdf_inverse_wishart_form(&s, 3.0, &DMatrix::identity(2, 2)),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn inverse_wishart_form_matches_dense_oracle() {
        let s: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.7]);
        let s0 = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.0, 0.0, 0.0, 0.3]);
        let nu = 4.5;
        let oracle = -0.5 * (nu + 4.0) * s.determinant().ln() - 0.5 * (s.clone().try_inverse().unwrap() * &s0).trace();
        assert!((logpdf_inverse_wishart_form(&s, nu, &s0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn inverse_wishart_draw_mean() {
        // E[Σ] = S / (df - d - 1).
        let mut rng = RngStream::new(8, 0);
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let df = 12.0;
        let n = 40_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += draw_inverse_wishart(df, &scale, &mut rng).unwrap();
        }
        let mean = acc / n as f64;
        let expect = &scale / (df - 3.0);
        assert!((mean - expect).amax() < 0.01);
    }

    #[test]
    fn matrix_normal_logpdf_matches_vec_form() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.4, -0.3, 1.0, 0.7, 0.2]);
        let m = DMatrix::from_row_slice(3, 2, &[0.0, 0.5, 0.0, 0.8, 0.5, 0.0]);
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.8, 0.0, 0.1, 0.0, 0.5]);
        let v = DMatrix::from_row_slice(2, 2, &[0.6, -0.1, -0.1, 0.3]);
        let fu = Factor::cholesky(&u, "u").unwrap();
        let fv = Factor::cholesky(&v, "v").unwrap();
        let got = logpdf_matrix_normal(&x, &m, &fu, &fv);
        let big = v.kronecker(&u);
        let r = DVector::from_column_slice((&x - &m).as_slice());
        let fb = Factor::cholesky(&big, "big").unwrap();
        assert!((got - fb.log_normal_density(&r)).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn hpd_bounds_are_samples(xs in prop::collection::vec(-1e3f64..1e3, 20..200), mass in 0.05f64..0.99) {
            let h = hpd_interval(&xs, mass).unwrap();
            prop_assert!(xs.contains(&h.lo) && xs.contains(&h.hi));
            prop_assert!(h.lo <= h.hi);
            let inside = xs.iter().filter(|v| h.contains(**v)).count() as f64 / xs.len() as f64;
            prop_assert!(inside + 1e-12 >= mass);
            prop_assert!((h.mass - mass).abs() <= 1.0 / xs.len() as f64 + 1e-12);
        }

        #[test]
        fn hpd_nested_for_unimodal_samples(seed in 0u64..500, m1 in 0.3f64..0.6, gap in 0.3f64..0.39) {
            let mut rng = RngStream::new(seed, 0);
            let xs: Vec<f64> = (0..2000).map(|_| rng.std_normal()).collect();
            let a = hpd_interval(&xs, m1).unwrap();
            let b = hpd_interval(&xs, m1 + gap).unwrap();
            prop_assert!(b.lo <= a.lo && a.hi <= b.hi);
        }
    }
}
