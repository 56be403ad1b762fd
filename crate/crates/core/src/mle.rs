//! (Quasi) maximum-likelihood estimation of the observation-driven models.
//!
//! Constraints are removed by reparameterization, `beta = tanh(b)` and
//! `nu = 2 + exp(n)`; `omega`, `alpha`, `gamma` and `h1` are free and `gamma`
//! is dropped from the parameter vector for the no-leverage variants.
//! SPEGARCH is fitted by Gaussian QML and keeps its standardized residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, BfgsConfig, StopReason};
use crate::volmodels::{EgarchParams, EgarchRecursion, Family, LinkExponent, ModelSpec, ResidualBank};

pub const MIN_FIT_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    /// A fit counts as converged only if the per-observation gradient
    /// max-norm at the optimum is at most this.
    pub converged_grad_tol: f64,
    pub std_errors: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iter: 500,
            rel_tol: 1e-9,
            grad_tol: 1e-6,
            converged_grad_tol: 1e-4,
            std_errors: true,
        }
    }
}

/// Asymptotic standard errors in the natural parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub omega: f64,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub beta: f64,
    pub nu: Option<f64>,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: EgarchParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the per-observation log-likelihood gradient in the
    /// unconstrained space at the returned point.
    pub grad_max_norm: f64,
    pub std_errors: Option<ParamErrors>,
    pub residual_bank: Option<ResidualBank>,
}

/// Maps between natural and unconstrained parameter vectors for one spec.
#[derive(Debug, Clone, Copy)]
pub struct Reparam {
    spec: ModelSpec,
}

impl Reparam {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if !spec.is_observation_driven() {
            return Err(Error::WrongFamily(spec.to_string()));
        }
        Ok(Self { spec })
    }

    fn has_nu(&self) -> bool {
        self.spec.family != Family::Spegarch
    }

    /// `alpha = exp(a)` for the families whose news term is `|eps|`: with
    /// `alpha < 0` large shocks of either sign push the state down without
    /// bound, and re-filtering beyond the fit window runs away to `-inf`.
    /// The bounded Beta-t score has no such failure mode.
    fn log_alpha(&self) -> bool {
        matches!(self.spec.family, Family::Tegarch | Family::Spegarch)
    }

    pub fn dim(&self) -> usize {
        4 + usize::from(self.spec.leverage) + usize::from(self.has_nu())
    }

    pub fn to_unconstrained(&self, p: &EgarchParams) -> Vec<f64> {
        let alpha = if self.log_alpha() {
            p.alpha.max(1e-8).ln()
        } else {
            p.alpha
        };
        let mut x = vec![p.omega, alpha];
        if self.spec.leverage {
            x.push(p.gamma);
        }
        x.push(p.beta.atanh());
        if let Some(nu) = p.nu.filter(|_| self.has_nu()) {
            x.push((nu - 2.0).ln());
        }
        x.push(p.h1);
        x
    }

    pub fn from_unconstrained(&self, x: &[f64]) -> EgarchParams {
        let mut it = x.iter().copied();
        let mut next = || it.next().expect("parameter vector too short");
        let omega = next();
        let alpha = if self.log_alpha() { next().exp() } else { next() };
        let gamma = if self.spec.leverage { next() } else { 0.0 };
        let beta = next().tanh();
        let nu = if self.has_nu() { Some(2.0 + next().exp()) } else { None };
        let h1 = next();
        EgarchParams {
            omega,
            alpha,
            gamma,
            beta,
            nu,
            h1,
        }
    }

    /// Derivative of each natural parameter w.r.t. its unconstrained coordinate.
    fn jacobian_diag(&self, p: &EgarchParams) -> Vec<f64> {
        let mut d = vec![1.0, if self.log_alpha() { p.alpha } else { 1.0 }];
        if self.spec.leverage {
            d.push(1.0);
        }
        d.push(1.0 - p.beta * p.beta);
        if let Some(nu) = p.nu {
            d.push(nu - 2.0);
        }
        d.push(1.0);
        d
    }

    fn errors_from(&self, se: &[f64]) -> ParamErrors {
        let mut it = se.iter().copied();
        let mut next = || it.next().expect("error vector too short");
        let omega = next();
        let alpha = next();
        let gamma = self.spec.leverage.then(&mut next);
        let beta = next();
        let nu = self.has_nu().then(&mut next);
        let h1 = next();
        ParamErrors {
            omega,
            alpha,
            gamma,
            beta,
            nu,
            h1,
        }
    }
}

/// Filtered log-likelihood of `ys`; `-inf` for invalid parameters or a
/// non-finite recursion.
pub fn loglik_egarch(spec: &ModelSpec, params: &EgarchParams, ys: &[f64]) -> f64 {
    match EgarchRecursion::new(spec, params) {
        Ok(rec) => rec.loglik(ys),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn sample_log_variance(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    var.max(1e-12).ln()
}

/// The deterministic first start.
pub fn default_start(spec: &ModelSpec, ys: &[f64]) -> EgarchParams {
    let log_var = sample_log_variance(ys);
    let h_bar = match spec.link() {
        LinkExponent::Half => log_var,
        LinkExponent::One => 0.5 * log_var,
    };
    let beta = 0.95;
    let alpha = 0.05;
    let omega = match spec.family {
        // |eps| is not centered in the SPEGARCH recursion
        Family::Spegarch => h_bar * (1.0 - beta) - alpha * (2.0 / std::f64::consts::PI).sqrt(),
        _ => h_bar * (1.0 - beta),
    };
    EgarchParams {
        omega,
        alpha,
        gamma: 0.0,
        beta,
        nu: (spec.family != Family::Spegarch).then_some(8.0),
        h1: h_bar,
    }
}

fn jittered_start(reparam: &Reparam, base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let spec = reparam.spec;
    let mut x = base.to_vec();
    let mut k = 0;
    let mut jitter = |x: &mut Vec<f64>, sd: f64, rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        x[k] += sd * z;
        k += 1;
    };
    jitter(&mut x, 0.02, rng); // omega
    jitter(&mut x, if reparam.log_alpha() { 0.5 } else { 0.03 }, rng); // alpha
    if spec.leverage {
        jitter(&mut x, 0.03, rng);
    }
    jitter(&mut x, 0.5, rng); // atanh(beta)
    if spec.family != Family::Spegarch {
        jitter(&mut x, 0.5, rng);
    }
    jitter(&mut x, 0.5, rng); // h1
    x
}

/// Fits `spec` to `ys` from several starts and keeps the best.
pub fn fit(spec: &ModelSpec, ys: &[f64], cfg: &OptimizerConfig, seed: u64) -> Result<FitResult> {
    let reparam = Reparam::new(*spec)?;
    if ys.len() < MIN_FIT_WINDOW {
        return Err(Error::InsufficientData(format!(
            "fit window has {} observations, need at least {MIN_FIT_WINDOW}",
            ys.len()
        )));
    }
    let n_obs = ys.len() as f64;
    // per-observation negative log-likelihood
    let objective = |x: &[f64]| {
        let p = reparam.from_unconstrained(x);
        if !(p.beta.abs() < 1.0) || p.nu.is_some_and(|nu| !(nu > 2.0 && nu.is_finite())) {
            return f64::INFINITY;
        }
        -EgarchRecursion::new_unchecked(spec, &p).loglik(ys) / n_obs
    };
    let bfgs = BfgsConfig {
        max_iter: cfg.max_iter,
        rel_tol: cfg.rel_tol,
        grad_tol: cfg.grad_tol,
        ..BfgsConfig::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = reparam.to_unconstrained(&default_start(spec, ys));
    let mut best: Option<optim::Minimum> = None;
    for start in 0..cfg.starts.max(1) {
        let x0 = if start == 0 {
            base.clone()
        } else {
            jittered_start(&reparam, &base, &mut rng)
        };
        if !objective(&x0).is_finite() {
            continue;
        }
        let m = optim::minimize(objective, &x0, &bfgs);
        if m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| Error::Estimation(format!("{spec}: no start produced a finite likelihood")))?;

    let params = reparam.from_unconstrained(&best.x);
    let grad_max_norm = best.grad_max_norm();
    let converged = matches!(best.reason, StopReason::RelativeChange | StopReason::Gradient)
        && grad_max_norm <= cfg.converged_grad_tol;

    let std_errors = if cfg.std_errors {
        standard_errors(&reparam, &objective, &best.x, n_obs)
    } else {
        None
    };

    let residual_bank = if spec.family == Family::Spegarch {
        let rec = EgarchRecursion::new_unchecked(spec, &params);
        let states = rec.filter(ys);
        let raw: Vec<f64> = ys.iter().zip(&states).map(|(&y, &h)| rec.standardize(h, y)).collect();
        Some(ResidualBank::standardized(&raw)?)
    } else {
        None
    };

    Ok(FitResult {
        spec: *spec,
        params,
        loglik: -best.f * n_obs,
        converged,
        iterations: best.iterations,
        grad_max_norm,
        std_errors,
        residual_bank,
    })
}

/// Inverse observed information in the unconstrained space, mapped back with
/// the delta method. `None` when the Hessian is not positive definite.
fn standard_errors(
    reparam: &Reparam,
    objective: &impl Fn(&[f64]) -> f64,
    x: &[f64],
    n_obs: f64,
) -> Option<ParamErrors> {
    let hess = optim::fd_hessian(objective, x, 1e-4) * n_obs;
    let chol = hess.cholesky()?;
    let cov = chol.inverse();
    let jac = reparam.jacobian_diag(&reparam.from_unconstrained(x));
    let se: Vec<f64> = (0..x.len()).map(|i| jac[i].abs() * cov[(i, i)].sqrt()).collect();
    se.iter().all(|s| s.is_finite()).then(|| reparam.errors_from(&se))
}
