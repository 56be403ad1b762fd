//! Density forecasting of asset returns with EGARCH-type and stochastic
//! volatility models, scored by the weighted CRPS in a rolling-window
//! comparison.

pub mod backtest;
pub mod dist;
pub mod error;
pub mod forecast;
pub mod market_data;
pub mod mle;
pub mod optim;
pub mod scoring;
pub mod smc;
pub mod volmodels;

pub use error::{Error, Result};
