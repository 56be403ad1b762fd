//! h-step-ahead predictive distributions.
//!
//! One step ahead, t-EGARCH and Beta-t-EGARCH have a closed-form Student-t
//! predictive law. Everything else is represented by sorted simulated draws
//! from the recursive forecast: the one-step model is iterated `h` times with
//! simulated innovations. For SV the paths also integrate over posterior
//! parameter draws and the filtered state distribution.

use std::io::Write;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::mle::FitResult;
use crate::smc::{run_filter, PosteriorDraws};
use crate::volmodels::{sv_transition, EgarchRecursion, Family, InnovationSampler, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    /// Simulated paths per empirical forecast.
    pub n_paths: usize,
    /// Posterior draws used per SV forecast (thinned evenly from the chain).
    pub sv_param_draws: usize,
    /// Particles per SV filtering pass.
    pub sv_particles: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            sv_param_draws: 50,
            sv_particles: 100,
        }
    }
}

/// A fitted model ready for forecasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Fitted {
    Mle(FitResult),
    Pmmh(PosteriorDraws),
}

impl Fitted {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Fitted::Mle(f) => f.spec,
            Fitted::Pmmh(p) => p.spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// Zero-mean unit-variance Student-t scaled by `scale`.
    StudentT { scale: f64, dof: f64 },
    /// Equally weighted Gaussian components `(location, scale)`.
    NormalMixture { components: Vec<(f64, f64)> },
    /// Sorted simulated draws.
    Empirical { draws: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDensity {
    pub horizon: usize,
    pub origin_date: Option<NaiveDate>,
    pub kind: DensityKind,
}

impl PredictiveDensity {
    pub fn student_t(scale: f64, dof: f64, horizon: usize) -> Self {
        Self {
            horizon,
            origin_date: None,
            kind: DensityKind::StudentT { scale, dof },
        }
    }

    pub fn normal(loc: f64, scale: f64) -> Self {
        Self {
            horizon: 1,
            origin_date: None,
            kind: DensityKind::NormalMixture {
                components: vec![(loc, scale)],
            },
        }
    }

    /// Sorts the draws; rejects non-finite values.
    pub fn empirical(mut draws: Vec<f64>, horizon: usize) -> Result<Self> {
        if draws.is_empty() || draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::State("empirical density needs finite draws".into()));
        }
        draws.sort_by(f64::total_cmp);
        Ok(Self {
            horizon,
            origin_date: None,
            kind: DensityKind::Empirical { draws },
        })
    }

    pub fn with_origin(mut self, date: NaiveDate) -> Self {
        self.origin_date = Some(date);
        self
    }

    pub fn draws(&self) -> Option<&[f64]> {
        match &self.kind {
            DensityKind::Empirical { draws } => Some(draws),
            _ => None,
        }
    }

    /// `P(Y <= z)`. The empirical CDF is the right-continuous step function.
    pub fn cdf_at(&self, z: f64) -> f64 {
        match &self.kind {
            DensityKind::StudentT { scale, dof } => dist::std_t_cdf(z / scale, *dof),
            DensityKind::NormalMixture { components } => {
                components.iter().map(|(m, s)| dist::norm_cdf((z - m) / s)).sum::<f64>() / components.len() as f64
            }
            DensityKind::Empirical { draws } => draws.partition_point(|&d| d <= z) as f64 / draws.len() as f64,
        }
    }

    /// CDF at every point of an ascending grid.
    pub fn cdf_on_grid(&self, grid: &[f64]) -> Vec<f64> {
        match &self.kind {
            DensityKind::Empirical { draws } => {
                let n = draws.len() as f64;
                let mut count = 0usize;
                grid.iter()
                    .map(|&z| {
                        while count < draws.len() && draws[count] <= z {
                            count += 1;
                        }
                        count as f64 / n
                    })
                    .collect()
            }
            _ => grid.iter().map(|&z| self.cdf_at(z)).collect(),
        }
    }

    /// Audit dump: an analytic descriptor or one sorted draw per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let origin = self.origin_date.map(|d| d.to_string()).unwrap_or_default();
        match &self.kind {
            DensityKind::StudentT { scale, dof } => {
                writeln!(out, "kind,horizon,origin_date,scale,dof")?;
                writeln!(out, "student_t,{},{origin},{scale},{dof}", self.horizon)?;
            }
            DensityKind::NormalMixture { components } => {
                writeln!(out, "kind,horizon,origin_date,loc,scale")?;
                for (m, s) in components {
                    writeln!(out, "normal_mixture,{},{origin},{m},{s}", self.horizon)?;
                }
            }
            DensityKind::Empirical { draws } => {
                writeln!(out, "kind,horizon,origin_date,draw")?;
                for d in draws {
                    writeln!(out, "empirical,{},{origin},{d}", self.horizon)?;
                }
            }
        }
        Ok(())
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 1 {
        return Err(Error::Domain("forecast horizon must be >= 1".into()));
    }
    Ok(())
}

/// Simulated draws of `y_{T+horizon}` given `ys = y_1..y_T` (the data since
/// the fitted model's initial state).
pub fn simulate_draws(
    spec: &ModelSpec,
    fitted: &Fitted,
    ys: &[f64],
    horizon: usize,
    cfg: &ForecastConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    check_horizon(horizon)?;
    if fitted.spec() != *spec {
        return Err(Error::WrongFamily(format!("fitted {} used as {spec}", fitted.spec())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_paths.max(1);
    match fitted {
        Fitted::Mle(fit) => {
            let rec = EgarchRecursion::new(spec, &fit.params)?;
            let sampler = InnovationSampler::new(spec, &fit.params, fit.residual_bank.as_ref())?;
            let h_next = *rec.filter(ys).last().expect("filter yields h1");
            if !h_next.is_finite() {
                return Err(Error::State(format!("{spec}: filtered state diverged")));
            }
            Ok((0..n)
                .map(|_| {
                    let mut h = h_next;
                    for _ in 1..horizon {
                        h = rec.step(h, sampler.draw(&mut rng));
                    }
                    rec.scale(h) * sampler.draw(&mut rng)
                })
                .collect())
        }
        Fitted::Pmmh(post) => {
            if post.draws.is_empty() {
                return Err(Error::State("no posterior draws".into()));
            }
            let Some(&y_last) = ys.last() else {
                return Err(Error::InsufficientData(
                    "SV forecast needs at least one observation".into(),
                ));
            };
            let n_theta = cfg.sv_param_draws.clamp(1, post.draws.len());
            let stride = post.draws.len() / n_theta;
            let clouds: Vec<_> = (0..n_theta)
                .map(|j| {
                    let theta = post.draws[j * stride];
                    let out = run_filter(&theta, ys, cfg.sv_particles.max(1), &mut rng);
                    (theta, out.particles)
                })
                .collect();
            Ok((0..n)
                .map(|i| {
                    let (theta, cloud) = &clouds[i % n_theta];
                    let mut h = cloud[rng.random_range(0..cloud.len())];
                    let mut eps = y_last * (-0.5 * h).exp();
                    let mut y = 0.0;
                    for _ in 0..horizon {
                        h = sv_transition(theta, h, eps, rng.sample(StandardNormal));
                        eps = rng.sample(StandardNormal);
                        y = (0.5 * h).exp() * eps;
                    }
                    y
                })
                .collect())
        }
    }
}

/// Predictive density of `y_{T+horizon}` given `ys = y_1..y_T`.
pub fn predict(
    spec: &ModelSpec,
    fitted: &Fitted,
    ys: &[f64],
    horizon: usize,
    cfg: &ForecastConfig,
    seed: u64,
) -> Result<PredictiveDensity> {
    check_horizon(horizon)?;
    if let (1, Fitted::Mle(fit)) = (horizon, fitted) {
        if matches!(spec.family, Family::Tegarch | Family::BetaTEgarch) && fit.spec == *spec {
            let rec = EgarchRecursion::new(spec, &fit.params)?;
            let h_next = *rec.filter(ys).last().expect("filter yields h1");
            if !h_next.is_finite() {
                return Err(Error::State(format!("{spec}: filtered state diverged")));
            }
            let dof = fit.params.nu.expect("t families carry nu");
            return Ok(PredictiveDensity::student_t(rec.scale(h_next), dof, 1));
        }
    }
    PredictiveDensity::empirical(simulate_draws(spec, fitted, ys, horizon, cfg, seed)?, horizon)
}
