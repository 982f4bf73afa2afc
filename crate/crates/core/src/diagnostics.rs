//! Summaries of Monte Carlo output.

use crate::error::{Error, Result};
use crate::stats::{hpd_interval, HpdInterval};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `N - 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Monte Carlo standard error of the mean from `batches` non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || xs.len() < 2 * batches {
        return Err(Error::invalid(format!(
            "batch means need at least {} draws for {batches} batches",
            2 * batches
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    Ok((variance(&means) / batches as f64).sqrt())
}

/// Effective sample size implied by the batch-means standard error.
pub fn effective_size(xs: &[f64], batches: usize) -> Result<f64> {
    let se = batch_means_se(xs, batches)?;
    let v = variance(xs);
    if se == 0.0 {
        return Ok(xs.len() as f64);
    }
    Ok(v / (se * se))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub hpd: HpdInterval,
}

pub fn summarize(xs: &[f64], mass: f64) -> Result<Summary> {
    let hpd = hpd_interval(xs, mass)?;
    Ok(Summary {
        mean: mean(xs),
        sd: variance(xs).sqrt(),
        hpd,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> Result<f64> {
    if xs.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("quantile needs samples and p in [0, 1]"));
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}
