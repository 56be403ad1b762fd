use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::LN_SQRT_2PI;
use crate::volmodels::{sv_transition, SvParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub seed: u64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Log of the (unbiased in levels) likelihood estimate; `-inf` on weight collapse.
    pub loglik: f64,
    /// Equally weighted draws from `p(h_T | y_1..y_T)`.
    pub particles: Vec<f64>,
}

/// Systematic resampling: writes ancestor indices (non-decreasing) for the
/// normalized `weights` into `out`, using the single uniform `u` in `[0, 1)`.
pub fn systematic_resample(weights: &[f64], u: f64, out: &mut Vec<usize>) {
    let n = weights.len();
    out.clear();
    let step = 1.0 / n as f64;
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let pos = (i as f64 + u) * step;
        while pos > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
}

/// Runs the filter with an explicit RNG. Particles are initialized from the
/// stationary law `N(mu / (1 - phi), sigma^2 / (1 - phi^2))`; with leverage
/// each particle's transition conditions on its own standardized residual.
pub fn run_filter<R: Rng + ?Sized>(params: &SvParams, ys: &[f64], n_particles: usize, rng: &mut R) -> FilterOutput {
    assert!(n_particles >= 1, "need at least one particle");
    let m0 = params.stationary_mean();
    let s0 = params.stationary_sd();
    let mut particles: Vec<f64> = (0..n_particles)
        .map(|_| m0 + s0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut next = vec![0.0; n_particles];
    let mut logw = vec![0.0; n_particles];
    let mut ancestors = Vec::with_capacity(n_particles);
    let mut loglik = 0.0;
    let ln_m = (n_particles as f64).ln();

    for (t, &y) in ys.iter().enumerate() {
        let y2 = y * y;
        let mut max = f64::NEG_INFINITY;
        for (lw, &h) in logw.iter_mut().zip(&particles) {
            *lw = -LN_SQRT_2PI - 0.5 * h - 0.5 * y2 * (-h).exp();
            if *lw > max {
                max = *lw;
            }
        }
        if !max.is_finite() {
            return FilterOutput {
                loglik: f64::NEG_INFINITY,
                particles,
            };
        }
        let mut sum = 0.0;
        for lw in logw.iter_mut() {
            *lw = (*lw - max).exp();
            sum += *lw;
        }
        loglik += max + sum.ln() - ln_m;
        for w in logw.iter_mut() {
            *w /= sum;
        }

        let u: f64 = rng.random();
        systematic_resample(&logw, u, &mut ancestors);

        if t + 1 == ys.len() {
            for (dst, &a) in next.iter_mut().zip(&ancestors) {
                *dst = particles[a];
            }
        } else {
            for (dst, &a) in next.iter_mut().zip(&ancestors) {
                let h = particles[a];
                let eps = y * (-0.5 * h).exp();
                let xi: f64 = rng.sample(StandardNormal);
                *dst = sv_transition(params, h, eps, xi);
            }
        }
        std::mem::swap(&mut particles, &mut next);
    }

    FilterOutput {
        loglik: if loglik.is_nan() { f64::NEG_INFINITY } else { loglik },
        particles,
    }
}

/// Log-likelihood estimate of `ys` under `params`, deterministic given `cfg.seed`.
pub fn particle_loglik(params: &SvParams, ys: &[f64], cfg: &SmcConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_filter(params, ys, cfg.n_particles, &mut rng).loglik
}
