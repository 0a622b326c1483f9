//! Market weights, entropy generating functions, excess growth and wealth
//! accounting.
//!
//! Log-wealth of a portfolio evolves as
//!
//! ```text
//! d log Z_pi = sum_i pi_i d log X_i + gamma*_pi dt
//! gamma*_pi  = 1/2 ( sum_i pi_i s_ii - sum_ij pi_i pi_j s_ij )
//! ```
//!
//! and the portfolio generated by the shifted entropy `S_c = S + c` satisfies
//!
//! ```text
//! d log(Z_pi / Z_mu) = d log S_c(mu) + gamma*_mu / S_c(mu) dt.
//! ```
//!
//! [`accumulate_wealth`] evaluates the left side step by step and
//! [`master_equation_rhs`] the right side, so the two can be compared.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::MarketPath;

/// Inputs must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Generator values at or below this are treated as zero.
pub const GENERATOR_TOL: f64 = 1e-14;

/// A weight vector on the unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    /// Wraps `w` after checking that it is finite and sums to one within
    /// [`SIMPLEX_TOL`]. Components may be negative (general portfolios).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::NotOnSimplex("empty weight vector".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotOnSimplex("non-finite component".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotOnSimplex(format!("components sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// The single-stock portfolio `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_weight(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for PortfolioWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `mu_i = X_i / sum_j X_j`.
pub fn market_weights(caps: &[f64]) -> Result<PortfolioWeights> {
    if caps.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    for (index, &value) in caps.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveCap { index, value });
        }
    }
    let total: f64 = caps.iter().sum();
    Ok(PortfolioWeights(caps.iter().map(|x| x / total).collect()))
}

fn check_closed_simplex(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::NotOnSimplex("empty vector".into()));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::NotOnSimplex(format!("component {v} is negative or not finite")));
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotOnSimplex(format!("components sum to {sum}")));
    }
    Ok(())
}

/// Shannon entropy `-sum x_i ln x_i`, with `0 ln 0 = 0`.
pub fn entropy(x: &[f64]) -> Result<f64> {
    check_closed_simplex(x)?;
    Ok(entropy_unchecked(x))
}

pub(crate) fn entropy_unchecked(x: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    // rounding can leave a corner at -0.0 or a hair below zero
    s.max(0.0)
}

/// `S_c(x) = S(x) + c` for `c >= 0`.
pub fn generalized_entropy(x: &[f64], c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::NegativeOffset(c));
    }
    Ok(entropy(x)? + c)
}

/// Weights of the portfolio generated by `S_c`:
/// `pi_i = (c - ln mu_i) mu_i / S_c(mu)`.
///
/// The normalizer is the sum of the numerators, which equals `S_c(mu)`
/// analytically, so the output sums to one up to rounding.
pub fn entropy_portfolio(mu: &PortfolioWeights, c: f64) -> Result<PortfolioWeights> {
    if !(c >= 0.0) {
        return Err(Error::NegativeOffset(c));
    }
    let m = mu.as_slice();
    if let Some(&v) = m.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NotOnSimplex(format!(
            "entropy portfolio needs strictly positive weights, got {v}"
        )));
    }
    let g = generalized_entropy(m, c)?;
    if g <= GENERATOR_TOL {
        return Err(Error::GeneratorNotPositive(g));
    }
    let numer: Vec<f64> = m.iter().map(|&w| (c - w.ln()) * w).collect();
    let total: f64 = numer.iter().sum();
    Ok(PortfolioWeights(numer.into_iter().map(|v| v / total).collect()))
}

fn check_square(sigma: &DMatrix<f64>, n: usize) -> Result<()> {
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: sigma.nrows().max(sigma.ncols()),
        });
    }
    Ok(())
}

fn check_symmetric(sigma: &DMatrix<f64>) -> Result<()> {
    let scale = sigma.amax().max(1.0);
    let n = sigma.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if worst > 1e-12 * scale {
        return Err(Error::AsymmetricCovariance(worst));
    }
    Ok(())
}

/// `gamma*_pi = 1/2 (sum_i pi_i s_ii - pi' s pi)`.
pub fn excess_growth_rate(pi: &PortfolioWeights, sigma: &DMatrix<f64>) -> Result<f64> {
    check_square(sigma, pi.len())?;
    check_symmetric(sigma)?;
    Ok(excess_growth_unchecked(pi.as_slice(), sigma))
}

pub(crate) fn excess_growth_unchecked(pi: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let n = pi.len();
    let mut diag = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        diag += pi[i] * sigma[(i, i)];
        let mut row = 0.0;
        for j in 0..n {
            row += sigma[(i, j)] * pi[j];
        }
        quad += pi[i] * row;
    }
    0.5 * (diag - quad)
}

/// One step of discrete log-wealth: `sum_i pi_i dlogX_i + gamma*_pi dt`.
pub fn wealth_step(pi: &PortfolioWeights, dlog_caps: &[f64], sigma: &DMatrix<f64>, dt: f64) -> Result<f64> {
    if dlog_caps.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            actual: dlog_caps.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let growth = excess_growth_rate(pi, sigma)?;
    let linear: f64 = pi.as_slice().iter().zip(dlog_caps).map(|(w, r)| w * r).sum();
    Ok(linear + growth * dt)
}

/// Log-wealth trajectories of a portfolio and of the market portfolio.
///
/// Both ledgers start at `log X(0)` and are advanced with [`wealth_step`],
/// so any step on which the portfolio holds the market weights adds exactly
/// zero to `relative`. `log_total_cap` is the exact `log X(t)` the market
/// ledger is meant to reproduce; see [`WealthLedger::market_tracking_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct WealthLedger {
    pub log_value: Vec<f64>,
    pub log_market: Vec<f64>,
    pub relative: Vec<f64>,
    pub log_total_cap: Vec<f64>,
}

impl WealthLedger {
    pub fn terminal_relative(&self) -> f64 {
        *self.relative.last().expect("ledger is never empty")
    }

    /// Largest gap between the stepped market ledger and `log X(t)`.
    pub fn market_tracking_error(&self) -> f64 {
        self.log_market
            .iter()
            .zip(&self.log_total_cap)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs [`wealth_step`] along `path` with the weights returned by
/// `weights_at(k)` for each grid index `k` (left endpoint of the step).
pub fn accumulate_wealth<F>(path: &MarketPath, mut weights_at: F) -> Result<WealthLedger>
where
    F: FnMut(usize) -> Result<PortfolioWeights>,
{
    let steps = path.steps();
    let log_total_cap: Vec<f64> = path
        .caps
        .iter()
        .map(|row| row.iter().sum::<f64>().ln())
        .collect();
    let start = log_total_cap[0];
    let mut log_value = Vec::with_capacity(steps + 1);
    let mut log_market = Vec::with_capacity(steps + 1);
    let mut relative = Vec::with_capacity(steps + 1);
    log_value.push(start);
    log_market.push(start);
    relative.push(0.0);
    let (mut z_pi, mut z_mu, mut rel) = (start, start, 0.0);
    for k in 0..steps {
        let dt = path.times[k + 1] - path.times[k];
        let mu = market_weights(&path.caps[k])?;
        let pi = weights_at(k)?;
        let d_mu = wealth_step(&mu, &path.dlog_caps[k], &path.sigma[k], dt)?;
        let d_pi = if pi == mu {
            d_mu
        } else {
            wealth_step(&pi, &path.dlog_caps[k], &path.sigma[k], dt)?
        };
        z_pi += d_pi;
        z_mu += d_mu;
        rel += d_pi - d_mu;
        log_value.push(z_pi);
        log_market.push(z_mu);
        relative.push(rel);
    }
    Ok(WealthLedger {
        log_value,
        log_market,
        relative,
        log_total_cap,
    })
}

/// Right side of the master equation for the portfolio generated by `S_c`
/// over the segment covered by `mu_path` (grid points) and `sigma_path`
/// (one matrix per step):
///
/// `ln S_c(mu_end) - ln S_c(mu_start) + sum_k gamma*_mu(t_k) / S_c(mu(t_k)) dt_k`,
///
/// with left-endpoint sums.
pub fn master_equation_rhs(
    mu_path: &[PortfolioWeights],
    sigma_path: &[DMatrix<f64>],
    c: f64,
    times: &[f64],
) -> Result<f64> {
    if mu_path.is_empty() {
        return Err(Error::InvalidParameter("empty weight path".into()));
    }
    let steps = mu_path.len() - 1;
    if sigma_path.len() < steps {
        return Err(Error::DimensionMismatch {
            expected: steps,
            actual: sigma_path.len(),
        });
    }
    if times.len() != mu_path.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_path.len(),
            actual: times.len(),
        });
    }
    let mut generator = Vec::with_capacity(mu_path.len());
    for mu in mu_path {
        let g = generalized_entropy(mu.as_slice(), c)?;
        if g <= GENERATOR_TOL {
            return Err(Error::GeneratorNotPositive(g));
        }
        generator.push(g);
    }
    let mut drift = 0.0;
    for k in 0..steps {
        let growth = excess_growth_rate(&mu_path[k], &sigma_path[k])?;
        drift += growth / generator[k] * (times[k + 1] - times[k]);
    }
    Ok(generator[steps].ln() - generator[0].ln() + drift)
}
