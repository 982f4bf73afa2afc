//! Cholesky-based helpers shared by the kernel, model and sampler code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Diagonal jitter added to correlation matrices before factorization.
pub const DEFAULT_JITTER: f64 = 1e-5;

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Factor {
    l: DMatrix<f64>,
}

impl Factor {
    /// Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(a: &DMatrix<f64>, block: &str) -> Result<Factor> {
        if a.nrows() != a.ncols() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::factorization(block));
        }
        let chol = nalgebra::Cholesky::new(a.clone()).ok_or_else(|| Error::factorization(block))?;
        let l = chol.unpack();
        if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return Err(Error::factorization(block));
        }
        Ok(Factor { l })
    }

    /// Factor of a symmetric positive-semidefinite matrix.
    ///
    /// Pivots that are zero up to rounding produce zero columns, so a zero
    /// matrix factors to `L = 0`. The result supports [`Factor::mul_l`] only
    /// when it is singular; solves require [`Factor::cholesky`].
    pub fn semidefinite(a: &DMatrix<f64>, block: &str) -> Result<Factor> {
        let n = a.nrows();
        if a.ncols() != n || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::factorization(block));
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * n as f64;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < -tol {
                return Err(Error::factorization(block));
            }
            if d <= tol {
                continue;
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / ljj;
            }
        }
        Ok(Factor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L z`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.l[(i, k)] * z[k];
            }
            out[i] = acc;
        }
        out
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = b.clone();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[(i, k)] * x[k];
            }
            x[i] = v / self.l[(i, i)];
        }
        x
    }

    /// `L⁻ᵀ b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.l[(k, i)] * x[k];
            }
            x[i] = v / self.l[(i, i)];
        }
        x
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `A⁻¹ B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad(&self, b: &DVector<f64>) -> f64 {
        self.solve_lower(b).norm_squared()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// Multivariate normal log density `log N(x; mean, A)`.
    pub fn log_normal_density(&self, resid: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + self.log_det() + self.quad(resid))
    }
}

/// Gaussian full conditional in information form: precision `P` and linear term `b`,
/// so the mean is `P⁻¹ b` and the covariance is `P⁻¹`.
#[derive(Clone, Debug)]
pub struct GaussianConditional {
    pub precision: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl GaussianConditional {
    pub fn mean(&self, block: &str) -> Result<DVector<f64>> {
        Ok(Factor::cholesky(&symmetrize(&self.precision), block)?.solve(&self.linear))
    }

    pub fn cov(&self, block: &str) -> Result<DMatrix<f64>> {
        Ok(Factor::cholesky(&symmetrize(&self.precision), block)?.inverse())
    }

    /// Draw `P⁻¹ b + L⁻ᵀ z` with `P = L Lᵀ` and `z` standard normal.
    pub fn draw(&self, rng: &mut RngStream, block: &str) -> Result<DVector<f64>> {
        let f = Factor::cholesky(&symmetrize(&self.precision), block)?;
        let mean = f.solve(&self.linear);
        let z = DVector::from_fn(f.dim(), |_, _| rng.std_normal());
        Ok(mean + f.solve_upper(&z))
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Copy of `a` with `jitter` added to every diagonal entry.
pub fn add_jitter(a: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    out
}
