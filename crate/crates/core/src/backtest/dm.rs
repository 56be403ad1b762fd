//! Diebold-Mariano test of equal predictive accuracy with a Newey-West
//! (Bartlett kernel) long-run variance.

use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, std_t_cdf};
use crate::error::{Error, Result};

/// Smallest loss series accepted by [`dm_test`].
pub const MIN_DM_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DmOptions {
    /// HAC bandwidth; `h - 1` when absent.
    pub lag: Option<usize>,
    /// Harvey-Leybourne-Newbold small-sample correction with Student-t
    /// p-values on `n - 1` degrees of freedom.
    pub hln: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub lag: usize,
    pub n: usize,
}

/// Bartlett-weighted long-run variance of `d` around its mean.
pub fn newey_west_variance(d: &[f64], lag: usize) -> f64 {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let autocov = |j: usize| (j..n).map(|t| (d[t] - mean) * (d[t - j] - mean)).sum::<f64>() / n as f64;
    let mut v = autocov(0);
    for j in 1..=lag.min(n.saturating_sub(1)) {
        v += 2.0 * (1.0 - j as f64 / (lag + 1) as f64) * autocov(j);
    }
    v
}

/// Tests `E[loss_a - loss_b] = 0`. A positive statistic means `a` has the
/// larger losses.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], horizon: usize, opts: &DmOptions) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Alignment(format!(
            "loss series have lengths {} and {}",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let n = loss_a.len();
    if n < MIN_DM_LEN {
        return Err(Error::InsufficientData(format!(
            "DM test needs n >= {MIN_DM_LEN}, got {n}"
        )));
    }
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let lag = opts.lag.unwrap_or(horizon - 1);
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().all(|&x| x == 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 1.0,
            lag,
            n,
        });
    }
    let v = newey_west_variance(&d, lag);
    let mean = d.iter().sum::<f64>() / n as f64;
    if !(v > f64::EPSILON * mean * mean) || !v.is_finite() {
        return Err(Error::DegenerateVariance(format!(
            "long-run variance {v:e} of the loss differential (mean {mean:e})"
        )));
    }
    let mut statistic = mean / (v / n as f64).sqrt();
    let p_value = if opts.hln {
        let (nf, hf) = (n as f64, horizon as f64);
        statistic *= ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt();
        let dof = nf - 1.0;
        // std_t_cdf is unit-variance; rescale to the classical t
        2.0 * (1.0 - std_t_cdf(statistic.abs() * ((dof - 2.0) / dof).sqrt(), dof))
    } else {
        2.0 * (1.0 - norm_cdf(statistic.abs()))
    };
    Ok(DmResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        lag,
        n,
    })
}
