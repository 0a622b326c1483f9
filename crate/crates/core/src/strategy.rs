//! The switching strategy: hold the market, move into the portfolio
//! generated by `S_delta = S + delta` once market entropy dips to
//! `A + delta` in the first half of the horizon, and return to the market
//! when entropy climbs back to `A + 2 delta`.
//!
//! `A` is the entropy floor on `[0, T/2]`, approximated by the minimum over
//! sample paths and grid points. On a path where entropy never dips the
//! strategy is the market throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{entropy_portfolio, PortfolioWeights};
use crate::sim::MarketPath;

/// Level tolerance for stopping-time comparisons.
pub const DEFAULT_LEVEL_TOL: f64 = 1e-9;

/// Floors below this are routed to the `A = 0` rule for delta.
pub const DEFAULT_ZERO_FLOOR_TOL: f64 = 1e-9;

/// Fraction of `(ln n - A) / 2` kept as slack when capping delta.
pub const DEFAULT_CAP_MARGIN: f64 = 0.01;

fn slack(horizon: f64) -> f64 {
    1e-12 * horizon.abs().max(1.0)
}

fn window_indices(times: &[f64], start: f64, end: f64) -> impl Iterator<Item = usize> + '_ {
    let eps = slack(*times.last().unwrap_or(&1.0));
    times
        .iter()
        .enumerate()
        .filter(move |(_, &t)| t >= start - eps && t <= end + eps)
        .map(|(k, _)| k)
}

/// Minimum of an entropy series over the grid points in `[start, end]`.
pub fn series_floor(times: &[f64], entropy: &[f64], start: f64, end: f64) -> Result<f64> {
    window_indices(times, start, end)
        .map(|k| entropy[k])
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))))
        .ok_or(Error::EmptyWindow { start, end })
}

/// Minimum of `S(mu(t_k))` over all paths and all grid points in the window.
pub fn estimate_entropy_floor(ensemble: &[MarketPath], window: (f64, f64)) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let mut floor = f64::INFINITY;
    for path in ensemble {
        let s = path.entropy_series();
        floor = floor.min(series_floor(&path.times, &s, window.0, window.1)?);
    }
    Ok(floor)
}

/// Floor on `[0, T/2]` is at most the floor on `[T/2, T]`.
pub fn check_condition_zero(ensemble: &[MarketPath], horizon: f64) -> Result<bool> {
    let first = estimate_entropy_floor(ensemble, (0.0, horizon / 2.0))?;
    let second = estimate_entropy_floor(ensemble, (horizon / 2.0, horizon))?;
    Ok(first <= second)
}

/// Per-path version of [`check_condition_zero`]; diagnostic only.
pub fn check_condition_zero_per_path(path: &MarketPath, horizon: f64) -> Result<bool> {
    check_condition_zero(std::slice::from_ref(path), horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaConfig {
    /// Slack kept below the cap `(ln n - A) / 2`.
    pub margin: f64,
    /// Required value of the lower bound when `A > 0`; `None` uses
    /// `0.01 * eps T / (2 (A + 3 delta_0))`.
    pub margin_pos: Option<f64>,
    pub zero_tol: f64,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        DeltaConfig {
            margin: DEFAULT_CAP_MARGIN,
            margin_pos: None,
            zero_tol: DEFAULT_ZERO_FLOOR_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRoute {
    /// `A = 0`: `delta = eps T / (6 ln 2)`, capped.
    ZeroFloor,
    /// `A > 0`: halving until the terminal lower bound clears the margin.
    Halving,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaChoice {
    pub delta: f64,
    pub route: DeltaRoute,
    pub halvings: u32,
    /// Value of `ln((A + d) / (A + 2d)) + eps T / (2 (A + 3d))` at the chosen delta.
    pub lower_bound: f64,
    pub margin_pos: f64,
}

/// Lower bound on the relative log-gain when the strategy is still in the
/// entropy phase at the horizon.
pub fn terminal_gain_bound(floor: f64, delta: f64, epsilon: f64, horizon: f64) -> f64 {
    ((floor + delta) / (floor + 2.0 * delta)).ln() + epsilon * horizon / (2.0 * (floor + 3.0 * delta))
}

/// `eps T / (6 ln 2)`.
pub fn zero_floor_delta(epsilon: f64, horizon: f64) -> f64 {
    epsilon * horizon / (6.0 * std::f64::consts::LN_2)
}

const MAX_DELTA_HALVINGS: u32 = 60;

/// Picks delta for floor `A`, lower bound `epsilon` on the market's excess
/// growth, horizon `T` and `n` stocks. The result always satisfies
/// `A + 2 delta < ln n`.
pub fn select_delta(floor: f64, epsilon: f64, horizon: f64, n: usize, cfg: &DeltaConfig) -> Result<DeltaChoice> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    let ln_n = (n as f64).ln();
    if !(floor > -cfg.zero_tol && floor < ln_n) {
        return Err(Error::InvalidParameter(format!("entropy floor {floor} outside [0, ln {n})")));
    }
    if !(cfg.margin > 0.0 && cfg.margin < 1.0) {
        return Err(Error::InvalidParameter(format!("cap margin {} outside (0, 1)", cfg.margin)));
    }
    let floor = floor.max(0.0);
    let cap = (ln_n - floor) / 2.0 * (1.0 - cfg.margin);
    let start = zero_floor_delta(epsilon, horizon).min(cap);
    if floor <= cfg.zero_tol {
        return Ok(DeltaChoice {
            delta: start,
            route: DeltaRoute::ZeroFloor,
            halvings: 0,
            lower_bound: terminal_gain_bound(0.0, start, epsilon, horizon),
            margin_pos: 0.0,
        });
    }
    let margin_pos = cfg
        .margin_pos
        .unwrap_or(0.01 * epsilon * horizon / (2.0 * (floor + 3.0 * start)));
    let mut delta = start;
    for halvings in 0..=MAX_DELTA_HALVINGS {
        let bound = terminal_gain_bound(floor, delta, epsilon, horizon);
        if bound >= margin_pos {
            return Ok(DeltaChoice {
                delta,
                route: DeltaRoute::Halving,
                halvings,
                lower_bound: bound,
                margin_pos,
            });
        }
        delta *= 0.5;
    }
    Err(Error::DeltaSelection(format!(
        "no delta within {MAX_DELTA_HALVINGS} halvings reaches margin {margin_pos} (A = {floor})"
    )))
}

/// A grid index together with its time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingTime {
    pub index: usize,
    pub time: f64,
}

/// First grid time in `[0, T/2]` with `S <= A + delta`, otherwise `T`.
pub fn tau1_from_series(times: &[f64], entropy: &[f64], floor: f64, delta: f64, level_tol: f64) -> StoppingTime {
    let last = times.len() - 1;
    let half = times[last] / 2.0 + slack(times[last]);
    let level = floor + delta;
    let index = times
        .iter()
        .zip(entropy)
        .take_while(|(t, _)| **t <= half)
        .position(|(_, s)| *s <= level + level_tol)
        .unwrap_or(last);
    StoppingTime {
        index,
        time: times[index],
    }
}

/// First grid time at or after `tau1` at which entropy reaches
/// `A + 2 delta` (first crossing from below, or equality within
/// `level_tol`), otherwise `T`.
pub fn tau2_from_series(
    times: &[f64],
    entropy: &[f64],
    tau1: StoppingTime,
    floor: f64,
    delta: f64,
    level_tol: f64,
) -> StoppingTime {
    let last = times.len() - 1;
    let level = floor + 2.0 * delta;
    let index = if tau1.index >= last {
        last
    } else {
        (tau1.index..=last)
            .find(|&k| entropy[k] >= level - level_tol)
            .unwrap_or(last)
    };
    StoppingTime {
        index,
        time: times[index],
    }
}

pub fn stopping_time_tau1(path: &MarketPath, floor: f64, delta: f64, horizon: f64) -> Result<StoppingTime> {
    check_horizon(path, horizon)?;
    Ok(tau1_from_series(&path.times, &path.entropy_series(), floor, delta, DEFAULT_LEVEL_TOL))
}

pub fn stopping_time_tau2(
    path: &MarketPath,
    tau1: StoppingTime,
    floor: f64,
    delta: f64,
    horizon: f64,
) -> Result<StoppingTime> {
    check_horizon(path, horizon)?;
    Ok(tau2_from_series(&path.times, &path.entropy_series(), tau1, floor, delta, DEFAULT_LEVEL_TOL))
}

fn check_horizon(path: &MarketPath, horizon: f64) -> Result<()> {
    if (path.horizon() - horizon).abs() > slack(horizon) {
        return Err(Error::InvalidParameter(format!(
            "path covers [0, {}], expected [0, {horizon}]",
            path.horizon()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MarketBefore,
    Entropy,
    MarketAfter,
}

/// Strategy parameters shared by every path of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    /// Entropy floor `A` (nats).
    pub floor: f64,
    pub delta: f64,
    /// Lower bound on the market's excess growth rate (per year).
    pub epsilon: f64,
    pub horizon: f64,
    pub level_tol: f64,
    /// Offset of the generator used in the entropy phase; normally `delta`.
    pub c_offset: f64,
}

impl StrategyParams {
    pub fn new(floor: f64, delta: f64, epsilon: f64, horizon: f64) -> Self {
        StrategyParams {
            floor,
            delta,
            epsilon,
            horizon,
            level_tol: DEFAULT_LEVEL_TOL,
            c_offset: delta,
        }
    }

    /// Checks `0 <= A`, `delta > 0` and `A + 2 delta < ln n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let ln_n = (n as f64).ln();
        if !(self.floor >= 0.0 && self.floor < ln_n) {
            return Err(Error::InvalidParameter(format!("floor {} outside [0, ln n)", self.floor)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.floor + 2.0 * self.delta < ln_n) {
            return Err(Error::InvalidParameter(format!(
                "A + 2 delta = {} is not below ln n = {ln_n}",
                self.floor + 2.0 * self.delta
            )));
        }
        if !(self.c_offset >= 0.0) {
            return Err(Error::NegativeOffset(self.c_offset));
        }
        Ok(())
    }
}

/// Strategy parameters plus the stopping times realized on one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyState {
    pub params: StrategyParams,
    pub tau1: StoppingTime,
    pub tau2: StoppingTime,
}

impl StrategyState {
    pub fn from_series(params: StrategyParams, times: &[f64], entropy: &[f64]) -> Self {
        let tau1 = tau1_from_series(times, entropy, params.floor, params.delta, params.level_tol);
        let tau2 = tau2_from_series(times, entropy, tau1, params.floor, params.delta, params.level_tol);
        StrategyState { params, tau1, tau2 }
    }

    pub fn for_path(params: StrategyParams, path: &MarketPath) -> Self {
        Self::from_series(params, &path.times, &path.entropy_series())
    }

    /// Whether the first stopping time fired in `[0, T/2]`.
    pub fn triggered(&self) -> bool {
        self.tau1.time <= self.params.horizon / 2.0 + slack(self.params.horizon)
    }

    /// Phase in force over the step starting at grid index `k`.
    pub fn phase_at(&self, k: usize) -> Phase {
        if k < self.tau1.index {
            Phase::MarketBefore
        } else if k < self.tau2.index {
            Phase::Entropy
        } else {
            Phase::MarketAfter
        }
    }
}

/// Weights of the switching portfolio at grid index `k`.
pub fn eta_weights_at(k: usize, path: &MarketPath, state: &StrategyState) -> Result<PortfolioWeights> {
    if k > path.steps() {
        return Err(Error::TimeOutOfRange(k as f64));
    }
    let mu = path.weights(k)?;
    match state.phase_at(k) {
        Phase::Entropy => entropy_portfolio(&mu, state.params.c_offset),
        Phase::MarketBefore | Phase::MarketAfter => Ok(mu),
    }
}

/// Weights of the switching portfolio at time `t`: the market before
/// `tau1` and from `tau2` on, the `S_c` portfolio in between.
pub fn eta_weights(t: f64, path: &MarketPath, state: &StrategyState) -> Result<PortfolioWeights> {
    let k = path.index_at(t)?;
    eta_weights_at(k, path, state)
}

/// `max_i mu_i(t_k) < 1 - delta_div` at every grid point in the window.
pub fn is_diverse(path: &MarketPath, delta_div: f64, window: (f64, f64)) -> Result<bool> {
    if !(delta_div > 0.0 && delta_div < 1.0) {
        return Err(Error::InvalidParameter(format!("diversity delta {delta_div} outside (0, 1)")));
    }
    let mut any = false;
    for k in window_indices(&path.times, window.0, window.1) {
        any = true;
        if path.weights(k)?.max_weight() >= 1.0 - delta_div {
            return Ok(false);
        }
    }
    if !any {
        return Err(Error::EmptyWindow {
            start: window.0,
            end: window.1,
        });
    }
    Ok(true)
}

/// Pointwise minimum of entropy across an ensemble on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid indices `(start, end)` of the longest stretch on which the curve
    /// does not decrease.
    pub longest_nondecreasing: (usize, usize),
}

impl FloorCurve {
    pub fn from_series(times: Vec<f64>, series: &[Vec<f64>]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidParameter("empty ensemble".into()));
        }
        let mut values = vec![f64::INFINITY; times.len()];
        for s in series {
            if s.len() != times.len() {
                return Err(Error::GridMismatch);
            }
            for (v, x) in values.iter_mut().zip(s) {
                *v = v.min(*x);
            }
        }
        let longest_nondecreasing = longest_nondecreasing_run(&values);
        Ok(FloorCurve {
            times,
            values,
            longest_nondecreasing,
        })
    }

    /// Length in years of the longest nondecreasing stretch.
    pub fn nondecreasing_span(&self) -> f64 {
        let (a, b) = self.longest_nondecreasing;
        self.times[b] - self.times[a]
    }
}

fn longest_nondecreasing_run(values: &[f64]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut start = 0;
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            start = k;
        }
        if k - start > best.1 - best.0 {
            best = (start, k);
        }
    }
    best
}

pub fn entropy_floor_curve(ensemble: &[MarketPath]) -> Result<FloorCurve> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    if ensemble.iter().any(|p| p.times != first.times) {
        return Err(Error::GridMismatch);
    }
    let series: Vec<Vec<f64>> = ensemble.iter().map(|p| p.entropy_series()).collect();
    FloorCurve::from_series(first.times.clone(), &series)
}
