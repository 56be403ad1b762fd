//! wasm-bindgen exports behind `www/index.html`: simulate a return path,
//! fit a model and draw its predictive CDF, and score a realized return
//! with the weighted CRPS.
//!
//! The logic lives in plain Rust functions returning `Result<_, String>` so
//! it can be tested natively; the exported wrappers only convert errors.

use volcast::forecast::{predict, Fitted, ForecastConfig, PredictiveDensity};
use volcast::mle::{self, FitResult, OptimizerConfig};
use volcast::scoring::{self, ScoringGrid, WeightKind};
use volcast::volmodels::{simulate_path, EgarchParams, Family, ModelSpec, Params, SvParams};
use wasm_bindgen::prelude::*;

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Simulates `n` returns. `params` is `[omega, alpha, gamma, beta, nu]` for
/// the t families and `[mu, phi, sigma, rho]` for SV; the path starts at the
/// unconditional log-volatility.
pub fn simulate_returns(model: &str, params: &[f64], n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let spec: ModelSpec = model.parse().map_err(text)?;
    let (params, h0) = match (spec.family, params) {
        (Family::Tegarch | Family::BetaTEgarch, &[omega, alpha, gamma, beta, nu]) => {
            let p = EgarchParams {
                omega,
                alpha,
                gamma,
                beta,
                nu: Some(nu),
                h1: 0.0,
            };
            (Params::Egarch(p), omega / (1.0 - beta))
        }
        (Family::Sv, &[mu, phi, sigma, rho]) => {
            let p = SvParams { mu, phi, sigma, rho };
            (Params::Sv(p), p.stationary_mean())
        }
        (Family::Spegarch, _) => return Err("SPEGARCH needs a residual bank; simulate a t family".into()),
        _ => return Err(format!("wrong number of parameters for {spec}")),
    };
    Ok(simulate_path(&spec, &params, h0, n, seed, None).map_err(text)?.returns)
}

/// The weight function `kind` evaluated at each `z`.
pub fn weights_at(kind: &str, z: &[f64]) -> Result<Vec<f64>, String> {
    let kind: WeightKind = kind.parse().map_err(text)?;
    Ok(z.iter().map(|&z| scoring::weight_value(kind, z)).collect())
}

#[wasm_bindgen]
pub fn simulate(model: &str, params: &[f64], n: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    simulate_returns(model, params, n, seed).map_err(js)
}

#[wasm_bindgen]
pub fn weight_curve(kind: &str, z: &[f64]) -> Result<Vec<f64>, JsError> {
    weights_at(kind, z).map_err(js)
}

/// A model fitted by maximum likelihood to a return series, ready to
/// forecast the values that follow it.
#[wasm_bindgen]
pub struct Forecaster {
    spec: ModelSpec,
    fit: FitResult,
    data: Vec<f64>,
    seed: u64,
}

impl Forecaster {
    /// Fits `model`, an EGARCH-type id such as `tegarch` or
    /// `beta-tegarch-nl`, to `returns`.
    pub fn fit(model: &str, returns: Vec<f64>, seed: u64) -> Result<Self, String> {
        let spec: ModelSpec = model.parse().map_err(text)?;
        if !spec.is_observation_driven() {
            return Err("the demo fits EGARCH-type models only".into());
        }
        let fit = mle::fit(&spec, &returns, &OptimizerConfig::default(), seed).map_err(text)?;
        Ok(Self {
            spec,
            fit,
            data: returns,
            seed,
        })
    }

    fn density(&self, horizon: usize, n_paths: usize) -> Result<PredictiveDensity, String> {
        let cfg = ForecastConfig {
            n_paths,
            ..ForecastConfig::default()
        };
        let fitted = Fitted::Mle(self.fit.clone());
        predict(
            &self.spec,
            &fitted,
            &self.data,
            horizon,
            &cfg,
            self.seed ^ horizon as u64,
        )
        .map_err(text)
    }

    /// Predictive CDF of the return `horizon` steps after the data,
    /// evaluated at each `z`.
    pub fn cdf(&self, horizon: usize, n_paths: usize, z: &[f64]) -> Result<Vec<f64>, String> {
        let density = self.density(horizon, n_paths)?;
        Ok(z.iter().map(|&z| density.cdf_at(z)).collect())
    }

    /// Weighted CRPS of `realized` under the `horizon`-step forecast, on the
    /// default scoring grid.
    pub fn wcrps(&self, horizon: usize, n_paths: usize, realized: f64, weight: &str) -> Result<f64, String> {
        let kind: WeightKind = weight.parse().map_err(text)?;
        let density = self.density(horizon, n_paths)?;
        Ok(scoring::wcrps(&density, realized, kind, &ScoringGrid::default()).value)
    }
}

#[wasm_bindgen]
impl Forecaster {
    #[wasm_bindgen(constructor)]
    pub fn new(model: &str, returns: Vec<f64>, seed: u64) -> Result<Forecaster, JsError> {
        Self::fit(model, returns, seed).map_err(js)
    }

    /// Parameter names, matching `param_values`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["omega", "alpha", "gamma", "beta"];
        if self.fit.params.nu.is_some() {
            names.push("nu");
        }
        names.push("h1");
        names.into_iter().map(String::from).collect()
    }

    pub fn param_values(&self) -> Vec<f64> {
        let p = self.fit.params;
        let mut v = vec![p.omega, p.alpha, p.gamma, p.beta];
        v.extend(p.nu);
        v.push(p.h1);
        v
    }

    pub fn loglik(&self) -> f64 {
        self.fit.loglik
    }

    pub fn converged(&self) -> bool {
        self.fit.converged
    }

    pub fn cdf_curve(&self, horizon: usize, n_paths: usize, z: &[f64]) -> Result<Vec<f64>, JsError> {
        self.cdf(horizon, n_paths, z).map_err(js)
    }

    /// `weight` is one of `uniform`, `center`, `tails`, `tail_r`, `tail_l`.
    pub fn score(&self, horizon: usize, n_paths: usize, realized: f64, weight: &str) -> Result<f64, JsError> {
        self.wcrps(horizon, n_paths, realized, weight).map_err(js)
    }
}
