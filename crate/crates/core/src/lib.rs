//! Entropy-generated portfolios and short-horizon relative arbitrage.
//!
//! The crate simulates capitalization markets (constant-coefficient,
//! volatility-stabilized or user-defined), evaluates portfolios generated by
//! the shifted entropy function, runs the two-stopping-time switching
//! strategy that holds the market until entropy dips and the entropy
//! portfolio until it recovers, and checks relative arbitrage over Monte
//! Carlo ensembles or ingested capitalization series.
//!
//! See `examples/` for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod io;
pub mod model;
pub mod portfolio;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
pub use model::{covariance_of_loadings, vsm_coefficients, MarketCoefficients, ModelKind, ModelSpec};
pub use portfolio::{
    accumulate_wealth, entropy, entropy_portfolio, excess_growth_rate, generalized_entropy,
    market_weights, master_equation_rhs, wealth_step, PortfolioWeights, WealthLedger,
};
pub use sim::{simulate_path, MarketPath};
pub use ensemble::{
    convergence_study, evaluate_paths, master_equation_residual, run_ensemble, verify_relative_arbitrage,
    ArbitrageReport, EnsembleConfig, EnsembleOutcome, StrategyConfig,
};
pub use strategy::{
    eta_weights, eta_weights_at, select_delta, stopping_time_tau1, stopping_time_tau2, StrategyParams, StrategyState,
};
