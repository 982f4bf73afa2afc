pub mod fit;
pub mod forecast;
pub mod simulate;
pub mod summarize;

use gpssm_core::diagnostics::summarize as summarize_draws;
use gpssm_core::stats::MIN_HPD_SAMPLES;

use crate::error::Result;
use crate::io::fmt_f;

pub const SUMMARY_HEADER: [&str; 5] = ["name", "mean", "sd", "hpd_lo", "hpd_hi"];

/// Mean, s.d. and HPD bounds; the bounds are `NaN` when there are too few draws.
pub(crate) fn moments(draws: &[f64], mass: f64) -> Result<[f64; 4]> {
    if draws.len() >= MIN_HPD_SAMPLES {
        let s = summarize_draws(draws, mass)?;
        Ok([s.mean, s.sd, s.hpd.lo, s.hpd.hi])
    } else {
        let m = gpssm_core::diagnostics::mean(draws);
        let sd = gpssm_core::diagnostics::variance(draws).sqrt();
        Ok([m, sd, f64::NAN, f64::NAN])
    }
}

/// `name, mean, sd, hpd_lo, hpd_hi`.
pub(crate) fn summary_row(name: &str, draws: &[f64], mass: f64) -> Result<Vec<String>> {
    let mut row = vec![name.to_string()];
    row.extend(moments(draws, mass)?.iter().map(|v| fmt_f(*v)));
    Ok(row)
}

pub(crate) fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}
