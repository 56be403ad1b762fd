use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::filter::{run_filter, SmcConfig};
use crate::error::{Error, Result};
use crate::volmodels::{Family, ModelSpec, SvParams};

/// Priors: `mu ~ N(0, mu_sd^2)`, `(phi + 1) / 2 ~ Beta(a, b)`,
/// `sigma^2 ~ InvGamma(shape, scale)`, `rho ~ U(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvPrior {
    pub mu_sd: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
}

impl Default for SvPrior {
    fn default() -> Self {
        Self {
            mu_sd: 10.0,
            phi_a: 20.0,
            phi_b: 1.5,
            sigma2_shape: 2.5,
            sigma2_scale: 0.025,
        }
    }
}

impl SvPrior {
    /// Log prior density of the unconstrained vector (up to a constant),
    /// including the Jacobian of `phi = tanh`, `sigma = exp`, `rho = tanh`.
    fn log_density(&self, p: &SvParams) -> f64 {
        let x = 0.5 * (p.phi + 1.0);
        let one_m_phi2 = 1.0 - p.phi * p.phi;
        let mut lp = -0.5 * (p.mu / self.mu_sd).powi(2);
        lp += (self.phi_a - 1.0) * x.ln() + (self.phi_b - 1.0) * (1.0 - x).ln() + one_m_phi2.ln();
        lp += -2.0 * self.sigma2_shape * p.sigma.ln() - self.sigma2_scale / (p.sigma * p.sigma);
        lp += (1.0 - p.rho * p.rho).ln();
        lp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmmhConfig {
    /// Total chain length including the initial point and burn-in.
    pub n_iter: usize,
    pub burn_in: usize,
    /// Initial random-walk standard deviations for `(mu, atanh phi, ln sigma, atanh rho)`.
    pub proposal_scales: [f64; 4],
    /// Tune the proposal during burn-in; frozen afterwards.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub prior: SvPrior,
    pub seed: u64,
    /// Starting point; derived from the data when absent.
    pub init: Option<SvParams>,
}

impl Default for PmmhConfig {
    fn default() -> Self {
        Self {
            n_iter: 6000,
            burn_in: 1000,
            proposal_scales: [0.01, 0.15, 0.1, 0.1],
            adapt: true,
            target_acceptance: 0.25,
            prior: SvPrior::default(),
            seed: 0,
            init: None,
        }
    }
}

impl PmmhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(Error::Domain(format!(
                "need burn_in < n_iter, got {} and {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.proposal_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Domain("proposal scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub draws: Vec<SvParams>,
    pub logliks: Vec<f64>,
    /// Post-burn-in acceptance rate.
    pub acceptance_rate: f64,
}

impl PosteriorDraws {
    pub fn mean(&self) -> SvParams {
        let n = self.draws.len() as f64;
        let sum = |f: fn(&SvParams) -> f64| self.draws.iter().map(f).sum::<f64>() / n;
        SvParams {
            mu: sum(|p| p.mu),
            phi: sum(|p| p.phi),
            sigma: sum(|p| p.sigma),
            rho: sum(|p| p.rho),
        }
    }

    /// Central interval `[q(alpha/2), q(1 - alpha/2)]` of one coordinate.
    pub fn interval(&self, coord: fn(&SvParams) -> f64, level: f64) -> (f64, f64) {
        let mut v: Vec<f64> = self.draws.iter().map(coord).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let idx = (p * (v.len() - 1) as f64).round() as usize;
            v[idx.min(v.len() - 1)]
        };
        let tail = 0.5 * (1.0 - level);
        (q(tail), q(1.0 - tail))
    }
}

fn to_z(p: &SvParams, leverage: bool) -> DVector<f64> {
    let mut z = vec![p.mu, p.phi.atanh(), p.sigma.ln()];
    if leverage {
        z.push(p.rho.atanh());
    }
    DVector::from_vec(z)
}

fn from_z(z: &DVector<f64>, leverage: bool) -> SvParams {
    SvParams {
        mu: z[0],
        phi: z[1].tanh(),
        sigma: z[2].exp(),
        rho: if leverage { z[3].tanh() } else { 0.0 },
    }
}

fn admissible(p: &SvParams) -> bool {
    p.mu.is_finite() && p.phi.abs() < 1.0 && p.sigma > 0.0 && p.sigma.is_finite() && p.rho.abs() < 1.0
}

fn default_init(ys: &[f64]) -> SvParams {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(1e-8);
    let phi = 0.95;
    SvParams {
        mu: (1.0 - phi) * var.ln(),
        phi,
        sigma: 0.2,
        rho: 0.0,
    }
}

fn covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n;
    samples.iter().fold(DMatrix::zeros(d, d), |acc, s| {
        let c = s - &mean;
        acc + &c * c.transpose()
    }) / (n - 1.0)
}

/// Random-walk PMMH over `(mu, atanh phi, ln sigma[, atanh rho])`.
///
/// During burn-in the step size is tuned toward `target_acceptance`, and at
/// 40%, 60% and 80% of burn-in the proposal covariance is re-estimated from
/// the most recent half of the burn-in states (skipped if the chain barely
/// moved there; a small diagonal floor keeps every direction open). Both are
/// frozen after burn-in.
pub fn pmmh(ys: &[f64], leverage: bool, smc: &SmcConfig, cfg: &PmmhConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if ys.is_empty() {
        return Err(Error::InsufficientData("empty window".into()));
    }
    let spec = ModelSpec::new(Family::Sv, leverage);
    let mut init = cfg.init.unwrap_or_else(|| default_init(ys));
    if !leverage {
        init.rho = 0.0;
    }
    init.validate(&spec)?;

    let d = if leverage { 4 } else { 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let filter_ll = |p: &SvParams, rng: &mut ChaCha8Rng| {
        let mut frng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        run_filter(p, ys, smc.n_particles, &mut frng).loglik
    };

    let mut z = to_z(&init, leverage);
    let mut current = init;
    let mut ll = filter_ll(&current, &mut rng);
    let mut lp = cfg.prior.log_density(&current);

    let scales: Vec<f64> = cfg.proposal_scales.iter().take(d).copied().collect();
    let mut chol = DMatrix::from_diagonal(&DVector::from_vec(scales.clone()));
    let mut log_lambda = 0.0_f64;
    let batch = 50;
    let mut batch_accepts = 0usize;
    // burn-in states, for re-estimating the proposal covariance
    let mut history: Vec<DVector<f64>> = Vec::new();
    let mut distinct = Vec::new();
    let stages: Vec<usize> = [4, 6, 8].iter().map(|k| k * cfg.burn_in / 10).collect();

    let keep = cfg.n_iter - cfg.burn_in;
    let mut draws = Vec::with_capacity(keep);
    let mut logliks = Vec::with_capacity(keep);
    let mut post_accepts = 0usize;
    let mut post_proposals = 0usize;

    for iter in 0..cfg.n_iter {
        if iter > 0 {
            let xi = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let z_new = &z + log_lambda.exp() * (&chol * xi);
            let cand = from_z(&z_new, leverage);
            let u: f64 = rng.random();
            let mut accepted = false;
            if admissible(&cand) {
                let ll_new = filter_ll(&cand, &mut rng);
                let lp_new = cfg.prior.log_density(&cand);
                let log_ratio = ll_new + lp_new - ll - lp;
                if ll_new.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio) {
                    z = z_new;
                    current = cand;
                    ll = ll_new;
                    lp = lp_new;
                    accepted = true;
                }
            }
            if iter >= cfg.burn_in {
                post_proposals += 1;
                post_accepts += usize::from(accepted);
            } else if cfg.adapt {
                batch_accepts += usize::from(accepted);
                if iter % batch == 0 {
                    let rate = batch_accepts as f64 / batch as f64;
                    let gain = 1.0 / ((iter / batch) as f64).sqrt();
                    log_lambda += 2.0 * gain * (rate - cfg.target_acceptance);
                    batch_accepts = 0;
                }
                history.push(z.clone());
                distinct.push(accepted);
                if stages.contains(&iter) {
                    // the most recent half of burn-in, once the transient from
                    // the starting point has had time to die out
                    let from = iter / 2;
                    let moves = distinct[from..].iter().filter(|&&a| a).count();
                    if moves >= 5 * d {
                        let mut cov = covariance(&history[from..]) * (2.38 * 2.38 / d as f64);
                        for (i, s) in scales.iter().enumerate() {
                            cov[(i, i)] += (0.05 * s).powi(2);
                        }
                        if let Some(c) = cov.cholesky() {
                            chol = c.l();
                            log_lambda = 0.0;
                        }
                    }
                }
            }
        }
        if iter >= cfg.burn_in {
            draws.push(current);
            logliks.push(ll);
        }
    }

    Ok(PosteriorDraws {
        spec,
        draws,
        logliks,
        acceptance_rate: if post_proposals == 0 {
            0.0
        } else {
            post_accepts as f64 / post_proposals as f64
        },
    })
}
