//! Squared-exponential Gaussian-process kernel, design vectors and kriging.
//!
//! Inputs are points `z = (t, x)` with `x ∈ ℝ^q`. The mean function is
//! `h(z)ᵀβ` with `h(z) = (1, t, x)`, and the correlation between two inputs is
//! `exp(-Σᵢ rᵢ (z₁ᵢ - z₂ᵢ)²)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{Factor, DEFAULT_JITTER};
use crate::rng::RngStream;

/// Minimum separation between two inputs of a system before they are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct InputPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl InputPoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    pub fn scalar(t: f64, x: f64) -> Self {
        Self { t, x: vec![x] }
    }

    /// Latent dimension `q`.
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Coordinate `i` of `(t, x₁, …, x_q)`.
    pub fn coord(&self, i: usize) -> f64 {
        if i == 0 {
            self.t
        } else {
            self.x[i - 1]
        }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    fn max_abs_diff(&self, other: &InputPoint) -> f64 {
        (0..=self.dim())
            .map(|i| (self.coord(i) - other.coord(i)).abs())
            .fold(0.0, f64::max)
    }
}

/// `h(z) = (1, t, x₁, …, x_q)`.
pub fn design_vector(z: &InputPoint) -> DVector<f64> {
    let mut h = DVector::zeros(z.dim() + 2);
    h[0] = 1.0;
    h[1] = z.t;
    for (i, v) in z.x.iter().enumerate() {
        h[i + 2] = *v;
    }
    h
}

/// Design matrix with rows `h(zᵢ)ᵀ`.
pub fn design_matrix(points: &[InputPoint]) -> DMatrix<f64> {
    let m = points.first().map_or(2, |p| p.dim() + 2);
    DMatrix::from_fn(points.len(), m, |i, j| match j {
        0 => 1.0,
        1 => points[i].t,
        _ => points[i].x[j - 2],
    })
}

/// Positive smoothness parameters `r₁, …, r_{q+1}`, one per input coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoothness(Vec<f64>);

impl Smoothness {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "smoothness entries must be positive, got {r:?}"
            )));
        }
        Ok(Self(r))
    }

    pub fn uniform(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Copy with entry `i` replaced; fails unless `value > 0`.
    pub fn with(&self, i: usize, value: f64) -> Result<Self> {
        let mut r = self.0.clone();
        r[i] = value;
        Self::new(r)
    }
}

pub fn correlation(z1: &InputPoint, z2: &InputPoint, smooth: &Smoothness) -> f64 {
    let mut acc = 0.0;
    for (i, r) in smooth.as_slice().iter().enumerate() {
        let d = z1.coord(i) - z2.coord(i);
        acc += r * d * d;
    }
    (-acc).exp()
}

/// Correlation matrix of `points` with `jitter` on the diagonal.
pub fn corr_matrix(points: &[InputPoint], smooth: &Smoothness, jitter: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0 + jitter;
        for j in 0..i {
            let c = correlation(&points[i], &points[j], smooth);
            a[(i, j)] = c;
            a[(j, i)] = c;
        }
    }
    a
}

pub fn cross_corr(z: &InputPoint, points: &[InputPoint], smooth: &Smoothness) -> DVector<f64> {
    DVector::from_iterator(points.len(), points.iter().map(|p| correlation(z, p, smooth)))
}

fn check_inputs(points: &[InputPoint], smooth: &Smoothness) -> Result<()> {
    let q = points
        .first()
        .map(|p| p.dim())
        .ok_or_else(|| Error::invalid("no input points"))?;
    if smooth.len() != q + 1 {
        return Err(Error::invalid(format!(
            "smoothness has {} entries, inputs need {}",
            smooth.len(),
            q + 1
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if p.dim() != q || !p.is_finite() {
            return Err(Error::invalid(format!("input point {i} is malformed")));
        }
    }
    Ok(())
}

/// The design points `G_n` of the look-up table.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<InputPoint>,
}

impl Grid {
    pub fn new(points: Vec<InputPoint>) -> Result<Self> {
        let q = points
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| Error::invalid("empty grid"))?;
        if q == 0 {
            return Err(Error::invalid("grid points need a latent coordinate"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.dim() != q || !p.is_finite() {
                return Err(Error::invalid(format!("grid point {i} is malformed")));
            }
            for (j, other) in points[..i].iter().enumerate() {
                if p.max_abs_diff(other) < DUPLICATE_TOL {
                    return Err(Error::invalid(format!("grid points {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { points })
    }

    /// Stratified random grid of `n` points with latent dimension `q`.
    ///
    /// Point `i` has time coordinate uniform on `[i, i+1)`. Each latent coordinate
    /// splits `[lo, hi)` into `n` equal cells, draws one uniform value per cell,
    /// and assigns the cells to points through a random permutation.
    pub fn stratified(n: usize, q: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::invalid("stratified grid needs n >= 1 and q >= 1"));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("grid range [{lo}, {hi}] is empty")));
        }
        let times: Vec<f64> = (0..n).map(|i| rng.uniform_in(i as f64, i as f64 + 1.0)).collect();
        let width = (hi - lo) / n as f64;
        let mut coords = vec![vec![0.0; q]; n];
        for k in 0..q {
            let mut cells: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.index(i + 1);
                cells.swap(i, j);
            }
            for (point, cell) in coords.iter_mut().zip(cells) {
                let a = lo + cell as f64 * width;
                point[k] = rng.uniform_in(a, a + width);
            }
        }
        let points = times
            .into_iter()
            .zip(coords)
            .map(|(t, x)| InputPoint::new(t, x))
            .collect();
        Grid::new(points)
    }

    pub fn points(&self) -> &[InputPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Latent dimension `q`.
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }
}

/// GP hyperparameters `θ = (β, σ², r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpParams {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub smooth: Smoothness,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrigingMoments {
    pub mean: f64,
    pub var: f64,
}

/// A set of conditioning inputs with its factored correlation matrix.
#[derive(Clone, Debug)]
pub struct KrigingSystem {
    points: Vec<InputPoint>,
    smooth: Smoothness,
    design: DMatrix<f64>,
    corr: DMatrix<f64>,
    factor: Factor,
}

impl KrigingSystem {
    pub fn new(points: Vec<InputPoint>, smooth: Smoothness, block: &str) -> Result<Self> {
        Self::with_jitter(points, smooth, DEFAULT_JITTER, block)
    }

    pub fn with_jitter(points: Vec<InputPoint>, smooth: Smoothness, jitter: f64, block: &str) -> Result<Self> {
        check_inputs(&points, &smooth)?;
        let corr = corr_matrix(&points, &smooth, jitter);
        let factor = Factor::cholesky(&corr, block)?;
        let design = design_matrix(&points);
        Ok(Self {
            points,
            smooth,
            design,
            corr,
            factor,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[InputPoint] {
        &self.points
    }

    pub fn smooth(&self) -> &Smoothness {
        &self.smooth
    }

    /// Design matrix `H` (rows `h(zᵢ)ᵀ`).
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Jittered correlation matrix `A`.
    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn cross_corr(&self, z: &InputPoint) -> DVector<f64> {
        cross_corr(z, &self.points, &self.smooth)
    }

    /// `A⁻¹ (values - Hβ)`.
    pub fn weights(&self, values: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(&(values - &self.design * beta))
    }

    /// Conditional moments at `z` given precomputed [`KrigingSystem::weights`].
    pub fn moments_with_weights(
        &self,
        z: &InputPoint,
        weights: &DVector<f64>,
        beta: &DVector<f64>,
        sigma2: f64,
        noise: f64,
    ) -> Result<KrigingMoments> {
        let h = design_vector(z);
        if sigma2 == 0.0 {
            return Ok(KrigingMoments {
                mean: h.dot(beta),
                var: noise,
            });
        }
        let s = self.cross_corr(z);
        let explained = self.factor.quad(&s);
        let var = noise + sigma2 * (1.0 - explained);
        if var < -1e-8 * sigma2 || !var.is_finite() {
            return Err(Error::NumericalDegeneracy(format!(
                "kriging variance {var} is negative"
            )));
        }
        Ok(KrigingMoments {
            mean: h.dot(beta) + s.dot(weights),
            var: var.max(0.0),
        })
    }

    /// `mean = h(z)ᵀβ + s(z)ᵀA⁻¹(values - Hβ)` and `var = noise + σ²(1 - s(z)ᵀA⁻¹s(z))`.
    pub fn moments(
        &self,
        z: &InputPoint,
        values: &DVector<f64>,
        params: &GpParams,
        noise: f64,
    ) -> Result<KrigingMoments> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} values for {} conditioning points",
                values.len(),
                self.len()
            )));
        }
        if params.smooth != self.smooth {
            return Err(Error::invalid("kriging parameters do not match the system smoothness"));
        }
        let w = self.weights(values, &params.beta);
        self.moments_with_weights(z, &w, &params.beta, params.sigma2, noise)
    }
}

/// Kriging moments at `z` conditioned on `values` observed at the grid points.
pub fn kriging_moments(
    z: &InputPoint,
    grid: &Grid,
    values: &DVector<f64>,
    params: &GpParams,
    noise: f64,
) -> Result<KrigingMoments> {
    let sys = KrigingSystem::new(
        grid.points().to_vec(),
        params.smooth.clone(),
        "look-up table correlation",
    )?;
    sys.moments(z, values, params, noise)
}
