//! The four conditional-volatility families and their no-leverage twins.
//!
//! Every model writes returns as `y_t = exp(h_t / k) * eps_t` where `h_t` is the
//! log-volatility state and `k` is 2 for t-EGARCH, SPEGARCH and SV, and 1 for
//! Beta-t-EGARCH. The observation-driven families update `h` deterministically
//! from the standardized innovation; SV has its own state noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::dist::{self, LN_SQRT_2PI};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Tegarch,
    BetaTEgarch,
    Spegarch,
    Sv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkExponent {
    /// `y = exp(h/2) eps`
    Half,
    /// `y = exp(h) eps`
    One,
}

impl LinkExponent {
    /// Divisor applied to `h` inside the exponential.
    pub fn divisor(self) -> f64 {
        match self {
            LinkExponent::Half => 2.0,
            LinkExponent::One => 1.0,
        }
    }
}

/// A model family together with its leverage flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub leverage: bool,
}

impl ModelSpec {
    pub const fn new(family: Family, leverage: bool) -> Self {
        Self { family, leverage }
    }

    pub fn link(&self) -> LinkExponent {
        match self.family {
            Family::BetaTEgarch => LinkExponent::One,
            _ => LinkExponent::Half,
        }
    }

    pub fn is_observation_driven(&self) -> bool {
        self.family != Family::Sv
    }

    /// The same family with the leverage flag flipped.
    pub fn twin(&self) -> Self {
        Self::new(self.family, !self.leverage)
    }

    /// Short machine identifier, e.g. `tegarch` or `sv-nl`.
    pub fn id(&self) -> String {
        let base = match self.family {
            Family::Tegarch => "tegarch",
            Family::BetaTEgarch => "beta-tegarch",
            Family::Spegarch => "spegarch",
            Family::Sv => "sv",
        };
        if self.leverage {
            base.to_owned()
        } else {
            format!("{base}-nl")
        }
    }

    /// The full roster: every family with and without leverage.
    pub fn roster() -> Vec<ModelSpec> {
        [Family::Tegarch, Family::BetaTEgarch, Family::Spegarch, Family::Sv]
            .into_iter()
            .flat_map(|f| [ModelSpec::new(f, true), ModelSpec::new(f, false)])
            .collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.family {
            Family::Tegarch => "t-EGARCH",
            Family::BetaTEgarch => "Beta-t-EGARCH",
            Family::Spegarch => "SPEGARCH",
            Family::Sv => "SV",
        };
        if self.leverage {
            f.write_str(base)
        } else {
            write!(f, "{base}-NL")
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, leverage) = match lower.strip_suffix("-nl") {
            Some(b) => (b, false),
            None => (lower.as_str(), true),
        };
        let family = match base {
            "tegarch" | "t-egarch" => Family::Tegarch,
            "beta-tegarch" | "beta-t-egarch" | "beta" => Family::BetaTEgarch,
            "spegarch" => Family::Spegarch,
            "sv" => Family::Sv,
            _ => return Err(Error::Domain(format!("unknown model `{s}`"))),
        };
        Ok(Self::new(family, leverage))
    }
}

/// Parameters shared by the three EGARCH-type families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Student-t degrees of freedom; `None` for SPEGARCH.
    pub nu: Option<f64>,
    /// Initial log-volatility, estimated alongside the rest.
    pub h1: f64,
}

impl EgarchParams {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !spec.is_observation_driven() {
            return Err(Error::WrongFamily(spec.to_string()));
        }
        let finite = [self.omega, self.alpha, self.gamma, self.beta, self.h1]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite EGARCH parameter".into()));
        }
        if self.beta.abs() >= 1.0 {
            return Err(Error::Domain(format!("|beta| = {} must be < 1", self.beta.abs())));
        }
        match (spec.family, self.nu) {
            (Family::Spegarch, None) => {}
            (Family::Spegarch, Some(_)) => {
                return Err(Error::Domain("SPEGARCH has no degrees-of-freedom parameter".into()))
            }
            (_, Some(nu)) if nu > 2.0 && nu.is_finite() => {}
            (_, nu) => return Err(Error::Domain(format!("degrees of freedom {nu:?} must be > 2"))),
        }
        if !spec.leverage && self.gamma != 0.0 {
            return Err(Error::Domain("no-leverage model requires gamma = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl SvParams {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if spec.family != Family::Sv {
            return Err(Error::WrongFamily(spec.to_string()));
        }
        if !self.mu.is_finite() || !(self.phi.abs() < 1.0) || !(self.rho.abs() < 1.0) {
            return Err(Error::Domain(format!("invalid SV parameters {self:?}")));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be > 0", self.sigma)));
        }
        if !spec.leverage && self.rho != 0.0 {
            return Err(Error::Domain("no-leverage model requires rho = 0".into()));
        }
        Ok(())
    }

    /// Mean of the stationary law of `h`.
    pub fn stationary_mean(&self) -> f64 {
        self.mu / (1.0 - self.phi)
    }

    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (1.0 - self.phi * self.phi).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    Egarch(EgarchParams),
    Sv(SvParams),
}

impl Params {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        match self {
            Params::Egarch(p) => p.validate(spec),
            Params::Sv(p) => p.validate(spec),
        }
    }
}

/// Standardized in-sample residuals used as the SPEGARCH innovation law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBank {
    residuals: Vec<f64>,
}

impl ResidualBank {
    /// Re-centers to mean 0 and rescales to unit variance before storing.
    pub fn standardized(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 || raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::State("residual bank needs at least two finite residuals".into()));
        }
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::State("residual bank has zero variance".into()));
        }
        let sd = var.sqrt();
        Ok(Self {
            residuals: raw.iter().map(|r| (r - mean) / sd).collect(),
        })
    }

    /// Stores residuals as given.
    pub fn from_raw(residuals: Vec<f64>) -> Result<Self> {
        if residuals.is_empty() || residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::State("residual bank must be nonempty and finite".into()));
        }
        Ok(Self { residuals })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.residuals[rng.random_range(0..self.residuals.len())]
    }
}

/// `E|eps|` for the unit-variance Student-t with `nu` degrees of freedom.
pub fn folded_t_mean(nu: f64) -> Result<f64> {
    if !(nu > 2.0) {
        return Err(Error::Domain(format!("degrees of freedom {nu} must be > 2")));
    }
    if nu > 1e7 {
        // the gamma ratio loses precision; the series correction is O(1/nu)
        return Ok((2.0 / std::f64::consts::PI).sqrt() * (1.0 - 0.75 / nu));
    }
    let log_ratio = statrs::function::gamma::ln_gamma(0.5 * (nu + 1.0)) - statrs::function::gamma::ln_gamma(0.5 * nu);
    Ok(2.0 * (nu - 2.0).sqrt() * log_ratio.exp() / (std::f64::consts::PI.sqrt() * (nu - 1.0)))
}

/// Score of the unit-variance Student-t log-density with respect to the
/// log-scale, as a function of the standardized innovation.
pub fn beta_t_score(eps: f64, nu: f64) -> f64 {
    debug_assert!(nu > 2.0);
    let e2 = eps * eps;
    if e2.is_infinite() {
        return nu;
    }
    (nu + 1.0) * e2 / ((nu - 2.0) + e2) - 1.0
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A validated observation-driven model with per-parameter constants cached,
/// so the recursion can run in a likelihood inner loop.
#[derive(Debug, Clone, Copy)]
pub struct EgarchRecursion {
    family: Family,
    params: EgarchParams,
    link_div: f64,
    abs_mean: f64,
    log_norm: f64,
}

impl EgarchRecursion {
    pub fn new(spec: &ModelSpec, params: &EgarchParams) -> Result<Self> {
        params.validate(spec)?;
        Ok(Self::new_unchecked(spec, params))
    }

    /// Skips validation; the caller guarantees `params` is valid for `spec`.
    pub(crate) fn new_unchecked(spec: &ModelSpec, params: &EgarchParams) -> Self {
        let (abs_mean, log_norm) = match (spec.family, params.nu) {
            (Family::Tegarch, Some(nu)) => (folded_t_mean(nu).unwrap_or(f64::NAN), dist::std_t_log_norm(nu)),
            (Family::BetaTEgarch, Some(nu)) => (0.0, dist::std_t_log_norm(nu)),
            _ => (0.0, -LN_SQRT_2PI),
        };
        Self {
            family: spec.family,
            params: *params,
            link_div: spec.link().divisor(),
            abs_mean,
            log_norm,
        }
    }

    pub fn params(&self) -> &EgarchParams {
        &self.params
    }

    #[inline]
    pub fn standardize(&self, h: f64, y: f64) -> f64 {
        y * (-h / self.link_div).exp()
    }

    #[inline]
    pub fn scale(&self, h: f64) -> f64 {
        (h / self.link_div).exp()
    }

    /// `h_{t+1}` given `h_t` and the standardized innovation `eps_t`.
    #[inline]
    pub fn step(&self, h: f64, eps: f64) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Tegarch => p.omega + p.alpha * (eps.abs() - self.abs_mean) + p.gamma * eps + p.beta * h,
            Family::BetaTEgarch => {
                let nu = p.nu.unwrap_or(f64::NAN);
                let u = beta_t_score(eps, nu);
                p.omega + p.alpha * u + sgn(-eps) * p.gamma * (u + 1.0) + p.beta * h
            }
            Family::Spegarch => p.omega + p.alpha * eps.abs() + p.gamma * eps + p.beta * h,
            Family::Sv => unreachable!("SV has no observation-driven recursion"),
        }
    }

    /// Conditional log-density of `y` given the state `h`.
    #[inline]
    pub fn log_density(&self, h: f64, y: f64) -> f64 {
        let log_scale = h / self.link_div;
        let eps = y * (-log_scale).exp();
        match self.params.nu {
            Some(nu) if self.family != Family::Spegarch => {
                self.log_norm - 0.5 * (nu + 1.0) * (eps * eps / (nu - 2.0)).ln_1p() - log_scale
            }
            _ => self.log_norm - 0.5 * eps * eps - log_scale,
        }
    }

    /// Runs the filtered recursion over `ys`, returning `h_1 ..= h_{T+1}`.
    pub fn filter(&self, ys: &[f64]) -> Vec<f64> {
        let mut states = Vec::with_capacity(ys.len() + 1);
        let mut h = self.params.h1;
        states.push(h);
        for &y in ys {
            h = self.step(h, self.standardize(h, y));
            states.push(h);
        }
        states
    }

    /// Log-likelihood via the prediction-error decomposition; `-inf` when any
    /// intermediate is non-finite.
    pub fn loglik(&self, ys: &[f64]) -> f64 {
        let mut h = self.params.h1;
        let mut total = 0.0;
        for &y in ys {
            total += self.log_density(h, y);
            h = self.step(h, self.standardize(h, y));
        }
        if total.is_finite() && h.is_finite() {
            total
        } else {
            f64::NEG_INFINITY
        }
    }
}

pub fn vol_step(spec: &ModelSpec, params: &EgarchParams, h: f64, eps: f64) -> Result<f64> {
    if spec.family == Family::Sv {
        return Err(Error::WrongFamily(spec.to_string()));
    }
    Ok(EgarchRecursion::new(spec, params)?.step(h, eps))
}

pub fn log_density(spec: &ModelSpec, params: &Params, h: f64, y: f64) -> Result<f64> {
    params.validate(spec)?;
    Ok(match params {
        Params::Egarch(p) => EgarchRecursion::new_unchecked(spec, p).log_density(h, y),
        Params::Sv(_) => dist::norm_logpdf_zero_mean(y, h.exp()),
    })
}

/// Long-run mean of `h`: `omega / (1 - beta)` or `mu / (1 - phi)`.
pub fn unconditional_level(params: &Params) -> Result<f64> {
    let (level, persistence) = match params {
        Params::Egarch(p) => (p.omega, p.beta),
        Params::Sv(p) => (p.mu, p.phi),
    };
    if !(persistence.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "persistence {persistence} on or beyond the unit boundary"
        )));
    }
    Ok(level / (1.0 - persistence))
}

/// Simulated returns `y_1..y_n` and states `h_1..h_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub returns: Vec<f64>,
    pub states: Vec<f64>,
}

/// Draws one unit-variance innovation for an observation-driven family.
pub(crate) enum InnovationSampler<'a> {
    StudentT { dist: StudentT<f64>, scale: f64 },
    Bank(&'a ResidualBank),
}

impl<'a> InnovationSampler<'a> {
    pub(crate) fn new(spec: &ModelSpec, params: &EgarchParams, bank: Option<&'a ResidualBank>) -> Result<Self> {
        match (spec.family, params.nu) {
            (Family::Spegarch, _) => bank
                .map(InnovationSampler::Bank)
                .ok_or_else(|| Error::State("SPEGARCH simulation requires a residual bank".into())),
            (_, Some(nu)) => Ok(InnovationSampler::StudentT {
                dist: StudentT::new(nu).map_err(|e| Error::Domain(e.to_string()))?,
                scale: ((nu - 2.0) / nu).sqrt(),
            }),
            _ => Err(Error::Domain("missing degrees of freedom".into())),
        }
    }

    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InnovationSampler::StudentT { dist, scale } => dist.sample(rng) * scale,
            InnovationSampler::Bank(bank) => bank.draw(rng),
        }
    }
}

/// One SV transition `h -> mu + phi h + sigma (rho eps + sqrt(1 - rho^2) xi)`.
#[inline]
pub(crate) fn sv_transition(p: &SvParams, h: f64, eps: f64, xi: f64) -> f64 {
    p.mu + p.phi * h + p.sigma * (p.rho * eps + (1.0 - p.rho * p.rho).sqrt() * xi)
}

/// Simulates `n` observations starting from `h_1 = h0`.
pub fn simulate_path(
    spec: &ModelSpec,
    params: &Params,
    h0: f64,
    n: usize,
    seed: u64,
    bank: Option<&ResidualBank>,
) -> Result<SimPath> {
    params.validate(spec)?;
    if n == 0 {
        return Err(Error::Domain("path length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut h = h0;
    match params {
        Params::Egarch(p) => {
            let rec = EgarchRecursion::new_unchecked(spec, p);
            let sampler = InnovationSampler::new(spec, p, bank)?;
            for _ in 0..n {
                let eps = sampler.draw(&mut rng);
                states.push(h);
                returns.push(rec.scale(h) * eps);
                h = rec.step(h, eps);
            }
        }
        Params::Sv(p) => {
            for _ in 0..n {
                let eps: f64 = rng.sample(StandardNormal);
                let xi: f64 = rng.sample(StandardNormal);
                states.push(h);
                returns.push((0.5 * h).exp() * eps);
                h = sv_transition(p, h, eps, xi);
            }
        }
    }
    Ok(SimPath { returns, states })
}
