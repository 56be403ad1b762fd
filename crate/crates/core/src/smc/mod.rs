//! Bootstrap particle filter for the SV model and the particle-marginal
//! Metropolis-Hastings sampler built on it.

mod filter;
mod pmmh;

pub use filter::{particle_loglik, run_filter, systematic_resample, FilterOutput, SmcConfig};
pub use pmmh::{pmmh, PmmhConfig, PosteriorDraws, SvPrior};
