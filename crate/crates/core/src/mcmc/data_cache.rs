//! Incremental data likelihood for single-site updates of `x_t`.
//!
//! Moving `x_t` changes only row and column `t` of `V = σ²_f A_f + σ²_ε I`, so
//! the change in `log N(y; Hβ_f, V)` equals the change in the conditional density
//! of `y_t` given the other observations. With `Q = V⁻¹` held explicitly, that
//! conditional and the updated inverse after an accepted move cost `O(T²)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernel::{correlation, design_vector, InputPoint};
use crate::linalg::{Factor, DEFAULT_JITTER};
use crate::model::{data_covariance, data_inputs, LatentState, ObservedSeries};
use crate::stats::logpdf_normal;

#[derive(Clone, Debug)]
pub struct DataCache {
    q: DMatrix<f64>,
    resid: DVector<f64>,
}

impl DataCache {
    pub fn new(state: &LatentState, y: &ObservedSeries) -> Result<Self> {
        let points = data_inputs(&state.x, y.len());
        let v = Factor::cholesky(
            &data_covariance(&points, &state.theta_f, state.s2_eps),
            "data covariance",
        )?;
        let resid = DVector::from_fn(y.len(), |i, _| {
            y.values()[i] - design_vector(&points[i]).dot(&state.theta_f.beta)
        });
        Ok(Self { q: v.inverse(), resid })
    }

    /// Column `t` of `V` (zero in position `t`) and its diagonal entry, with `x_t = xt`.
    fn column(&self, t: usize, xt: f64, state: &LatentState) -> (DVector<f64>, f64) {
        let n = self.resid.len();
        let z = InputPoint::scalar(t as f64, xt);
        let s2f = state.theta_f.sigma2;
        let mut v = DVector::zeros(n);
        for j in 0..n {
            if j + 1 != t {
                v[j] = s2f
                    * correlation(
                        &z,
                        &InputPoint::scalar((j + 1) as f64, state.x[j + 1]),
                        &state.theta_f.smooth,
                    );
            }
        }
        (v, s2f * (1.0 + DEFAULT_JITTER) + state.s2_eps)
    }

    /// `V_{-t}⁻¹ a` for a vector `a` that is zero in position `t`; the result is zero there too.
    fn reduced_solve(&self, i: usize, a: &DVector<f64>) -> DVector<f64> {
        let qa = &self.q * a;
        let scale = qa[i] / self.q[(i, i)];
        let mut out = qa - self.q.column(i) * scale;
        out[i] = 0.0;
        out
    }

    fn conditional_parts(
        &self,
        t: usize,
        xt: f64,
        state: &LatentState,
        y: &ObservedSeries,
    ) -> (f64, f64, f64, DVector<f64>) {
        let i = t - 1;
        let (v, c) = self.column(t, xt, state);
        let mut r0 = self.resid.clone();
        r0[i] = 0.0;
        let bv = self.reduced_solve(i, &v);
        let mean = bv.dot(&r0);
        let var = c - v.dot(&bv);
        let r = y.at(t) - design_vector(&InputPoint::scalar(t as f64, xt)).dot(&state.theta_f.beta);
        (r, mean, var, bv)
    }

    /// `log N(y_t | y_{-t})` with `x_t = xt` and every other input as in `state`.
    pub fn conditional_logpdf(&self, t: usize, xt: f64, state: &LatentState, y: &ObservedSeries) -> f64 {
        let (r, mean, var, _) = self.conditional_parts(t, xt, state, y);
        logpdf_normal(r, mean, var)
    }

    /// Change in the data log likelihood when `x_t` moves from its current value to `xt`.
    pub fn log_ratio(&self, t: usize, xt: f64, state: &LatentState, y: &ObservedSeries) -> f64 {
        self.conditional_logpdf(t, xt, state, y) - self.conditional_logpdf(t, state.x[t], state, y)
    }

    /// Refresh the cache after `x_t` moves to `xt`; `state` still holds the old value.
    pub fn update(&mut self, t: usize, xt: f64, state: &LatentState, y: &ObservedSeries) {
        let i = t - 1;
        let (r, _, var, bv) = self.conditional_parts(t, xt, state, y);
        let qi = self.q.column(i).into_owned();
        let qii = self.q[(i, i)];
        let mut b = &self.q - &qi * qi.transpose() / qii;
        b += &bv * bv.transpose() / var;
        for j in 0..self.resid.len() {
            b[(i, j)] = -bv[j] / var;
            b[(j, i)] = -bv[j] / var;
        }
        b[(i, i)] = 1.0 / var;
        self.q = b;
        self.resid[i] = r;
    }
}
