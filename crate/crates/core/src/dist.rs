//! Scalar density and distribution helpers shared by the models and scores.

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln N(y; 0, var)`
pub fn norm_logpdf_zero_mean(y: f64, var: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * y * y / var
}

/// Log-normalizing constant of the unit-variance Student-t with `nu > 2`
/// degrees of freedom.
pub fn std_t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
}

/// Log-density of the unit-variance Student-t at `x`.
pub fn std_t_logpdf(x: f64, nu: f64) -> f64 {
    std_t_log_norm(nu) - 0.5 * (nu + 1.0) * (x * x / (nu - 2.0)).ln_1p()
}

/// Distribution function of the unit-variance Student-t.
pub fn std_t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    // rescale to the classical t and use the incomplete beta representation
    let t = x * (nu / (nu - 2.0)).sqrt();
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}
