//! Monte Carlo ensembles: calibration on a pilot ensemble, scoring of the
//! switching strategy on a disjoint scored ensemble, and master-equation
//! residual and step-size studies.
//!
//! Every path draws from its own seed derived from the master seed and its
//! index, and results are gathered in index order, so the output does not
//! depend on how many threads run the simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::portfolio::{
    accumulate_wealth, entropy_portfolio, excess_growth_unchecked, market_weights, master_equation_rhs,
    PortfolioWeights,
};
use crate::sim::{
    aggregate_increments, brownian_increments, path_seed, simulate_path, simulate_path_from_increments,
    time_grid, MarketPath, SeedStream,
};
use crate::strategy::{
    eta_weights_at, is_diverse, select_delta, series_floor, DeltaConfig, DeltaRoute, FloorCurve,
    StrategyParams, StrategyState, DEFAULT_LEVEL_TOL,
};

pub const DEFAULT_EPSILON_SAFETY: f64 = 0.9;
pub const DEFAULT_DIVERSITY_DELTA: f64 = 1e-3;
pub const DEFAULT_ZERO_FLOOR_THRESHOLD: f64 = 1e-3;
/// Weak-dominance slack is `TOL_AS_PER_DT * dt` unless set explicitly.
pub const TOL_AS_PER_DT: f64 = 10.0;
/// Master-equation tolerance is `TOL_MASTER_PER_DT * dt` unless set explicitly.
pub const TOL_MASTER_PER_DT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonMode {
    Supplied(f64),
    /// `safety * min_k gamma*_mu(t_k)` over the pilot ensemble.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMode {
    Auto,
    Supplied(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub epsilon: EpsilonMode,
    pub epsilon_safety: f64,
    pub delta: DeltaMode,
    /// Generator offset in the entropy phase; defaults to delta.
    pub c_offset: Option<f64>,
    pub delta_cfg: DeltaConfig,
    pub level_tol: f64,
    pub tol_as: Option<f64>,
    pub tolerance_master: Option<f64>,
    pub diversity_delta: f64,
    /// A non-diverse pilot with floor below this is treated as `A = 0`.
    pub zero_floor_threshold: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            epsilon: EpsilonMode::Measured,
            epsilon_safety: DEFAULT_EPSILON_SAFETY,
            delta: DeltaMode::Auto,
            c_offset: None,
            delta_cfg: DeltaConfig::default(),
            level_tol: DEFAULT_LEVEL_TOL,
            tol_as: None,
            tolerance_master: None,
            diversity_delta: DEFAULT_DIVERSITY_DELTA,
            zero_floor_threshold: DEFAULT_ZERO_FLOOR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub pilot_paths: usize,
    pub master_seed: u64,
    pub strategy: StrategyConfig,
}

impl EnsembleConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, pilot_paths: usize, master_seed: u64) -> Self {
        EnsembleConfig {
            horizon,
            dt,
            n_paths,
            pilot_paths,
            master_seed,
            strategy: StrategyConfig::default(),
        }
    }
}

/// Per-path quantities needed for calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub floor_first_half: f64,
    pub floor_second_half: f64,
    pub min_market_growth: f64,
    pub diverse_first_half: bool,
}

/// Smallest `gamma*_mu(t_k)` along the path.
pub fn min_market_excess_growth(path: &MarketPath) -> Result<f64> {
    let mut min = f64::INFINITY;
    for k in 0..path.steps() {
        let mu = market_weights(&path.caps[k])?;
        min = min.min(excess_growth_unchecked(mu.as_slice(), &path.sigma[k]));
    }
    Ok(min)
}

pub fn summarize_path(path: &MarketPath, diversity_delta: f64) -> Result<PathSummary> {
    let horizon = path.horizon();
    let s = path.entropy_series();
    Ok(PathSummary {
        floor_first_half: series_floor(&path.times, &s, 0.0, horizon / 2.0)?,
        floor_second_half: series_floor(&path.times, &s, horizon / 2.0, horizon)?,
        min_market_growth: min_market_excess_growth(path)?,
        diverse_first_half: is_diverse(path, diversity_delta, (0.0, horizon / 2.0))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    Supplied,
    Measured,
}

/// Strategy parameters estimated from a pilot ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub floor_estimated: f64,
    pub floor_second_half: f64,
    pub condition_zero: bool,
    pub diverse: bool,
    pub zero_floor_applied: bool,
    pub min_market_growth: f64,
    pub epsilon_source: EpsilonSource,
    pub delta_route: DeltaRoute,
    pub delta_lower_bound: f64,
    pub params: StrategyParams,
}

/// Turns pilot summaries into strategy parameters.
///
/// Fails with [`Error::HypothesisUnsatisfiable`] when the market's excess
/// growth rate is not bounded away from zero on the pilot.
pub fn calibrate(pilot: &[PathSummary], n: usize, horizon: f64, cfg: &StrategyConfig) -> Result<Calibration> {
    if pilot.is_empty() {
        return Err(Error::InvalidParameter("pilot ensemble is empty".into()));
    }
    let floor_estimated = pilot.iter().map(|p| p.floor_first_half).fold(f64::INFINITY, f64::min);
    let floor_second_half = pilot.iter().map(|p| p.floor_second_half).fold(f64::INFINITY, f64::min);
    let min_market_growth = pilot.iter().map(|p| p.min_market_growth).fold(f64::INFINITY, f64::min);
    let diverse = pilot.iter().all(|p| p.diverse_first_half);

    if !(min_market_growth > 0.0) {
        return Err(Error::HypothesisUnsatisfiable(format!(
            "minimum market excess growth rate on the pilot is {min_market_growth}; no epsilon > 0 bounds it"
        )));
    }
    let (epsilon, epsilon_source) = match cfg.epsilon {
        EpsilonMode::Supplied(e) if e > 0.0 => (e, EpsilonSource::Supplied),
        EpsilonMode::Supplied(e) => return Err(Error::config("epsilon", format!("must be positive, got {e}"))),
        EpsilonMode::Measured => (cfg.epsilon_safety * min_market_growth, EpsilonSource::Measured),
    };

    let zero_floor_applied = !diverse && floor_estimated < cfg.zero_floor_threshold;
    let floor = if zero_floor_applied { 0.0 } else { floor_estimated.max(0.0) };

    let (delta, delta_route, delta_lower_bound) = match cfg.delta {
        DeltaMode::Auto => {
            let choice = select_delta(floor, epsilon, horizon, n, &cfg.delta_cfg)?;
            (choice.delta, choice.route, choice.lower_bound)
        }
        DeltaMode::Supplied(d) => (
            d,
            DeltaRoute::Supplied,
            crate::strategy::terminal_gain_bound(floor, d, epsilon, horizon),
        ),
    };
    let params = StrategyParams {
        floor,
        delta,
        epsilon,
        horizon,
        level_tol: cfg.level_tol,
        c_offset: cfg.c_offset.unwrap_or(delta),
    };
    params.validate(n)?;
    Ok(Calibration {
        floor_estimated,
        floor_second_half,
        condition_zero: floor_estimated <= floor_second_half,
        diverse,
        zero_floor_applied,
        min_market_growth,
        epsilon_source,
        delta_route,
        delta_lower_bound,
        params,
    })
}

/// Outcome of the switching strategy on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path_id: usize,
    pub seed: Option<u64>,
    pub tau1: f64,
    pub tau2: f64,
    pub triggered: bool,
    pub rel_terminal: f64,
    /// `log(Z_eta / Z_mu)` at every grid point.
    pub rel: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Master-equation residual over `[tau1, tau2]`, when that is nonempty.
    pub residual: Option<f64>,
}

/// Runs the switching strategy on one path.
pub fn score_path(path_id: usize, path: &MarketPath, params: &StrategyParams) -> Result<PathRecord> {
    let entropy = path.entropy_series();
    let state = StrategyState::from_series(*params, &path.times, &entropy);
    let ledger = accumulate_wealth(path, |k| eta_weights_at(k, path, &state))?;
    let (k1, k2) = (state.tau1.index, state.tau2.index);
    let residual = if k2 > k1 {
        let mu: Vec<PortfolioWeights> = (k1..=k2).map(|k| path.weights(k)).collect::<Result<_>>()?;
        let rhs = master_equation_rhs(&mu, &path.sigma[k1..k2], params.c_offset, &path.times[k1..=k2])?;
        Some((ledger.relative[k2] - ledger.relative[k1] - rhs).abs())
    } else {
        None
    };
    Ok(PathRecord {
        path_id,
        seed: path.seed,
        tau1: state.tau1.time,
        tau2: state.tau2.time,
        triggered: state.triggered(),
        rel_terminal: ledger.terminal_relative(),
        rel: ledger.relative,
        entropy,
        residual,
    })
}

/// The two conditions of relative arbitrage read off terminal relative
/// log-wealth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// Every path ends at or above `-tol_as`.
    pub weak_dominance: bool,
    /// Some path ends above `+tol_as`.
    pub strict_gain: bool,
    pub arbitrage: bool,
    /// Every path ends above `+tol_as`.
    pub strong: bool,
}

pub fn verify_relative_arbitrage(rels: &[f64], tol_as: f64) -> Result<Verdict> {
    if rels.is_empty() {
        return Err(Error::InvalidParameter("no terminal values to verify".into()));
    }
    let weak_dominance = rels.iter().all(|&r| r >= -tol_as);
    let strict_gain = rels.iter().any(|&r| r > tol_as);
    Ok(Verdict {
        weak_dominance,
        strict_gain,
        arbitrage: weak_dominance && strict_gain,
        strong: rels.iter().all(|&r| r > tol_as),
    })
}

/// Ensemble-level summary. Field order is the emitted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub schema: u32,
    pub n_paths: usize,
    pub pilot_paths: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub seed: Option<u64>,
    pub epsilon: f64,
    pub epsilon_source: EpsilonSource,
    pub min_market_growth: f64,
    #[serde(rename = "A_estimated")]
    pub floor_estimated: f64,
    #[serde(rename = "A_second_half")]
    pub floor_second_half: f64,
    #[serde(rename = "A")]
    pub floor: f64,
    pub delta: f64,
    pub delta_route: DeltaRoute,
    pub delta_lower_bound: f64,
    pub c_offset: f64,
    pub condition_zero: bool,
    pub diversity: bool,
    pub zero_floor_applied: bool,
    pub hypothesis_satisfied: bool,
    pub tol_as: f64,
    pub tolerance_master: f64,
    pub level_tol: f64,
    pub frac_nonnegative: f64,
    pub frac_strict: f64,
    pub frac_triggered: f64,
    pub frac_strict_given_triggered: f64,
    pub mean_rel: f64,
    pub min_rel: f64,
    pub max_rel: f64,
    pub arbitrage: bool,
    pub strong: bool,
    pub residual_count: usize,
    pub residual_mean: f64,
    pub residual_max: f64,
    pub residual_within_tolerance: usize,
    pub floor_estimator: String,
    pub tolerance_note: String,
}

pub const REPORT_SCHEMA: u32 = 1;

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    pub report: ArbitrageReport,
    pub calibration: Calibration,
    pub records: Vec<PathRecord>,
    pub times: Vec<f64>,
}

impl EnsembleOutcome {
    /// Pointwise entropy minimum over the scored paths.
    pub fn floor_curve(&self) -> Result<FloorCurve> {
        let series: Vec<Vec<f64>> = self.records.iter().map(|r| r.entropy.clone()).collect();
        FloorCurve::from_series(self.times.clone(), &series)
    }
}

struct Tolerances {
    dt: f64,
    tol_as: f64,
    tolerance_master: f64,
}

/// Largest step of the grid.
fn grid_step(times: &[f64]) -> f64 {
    times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

fn tolerances(dt: f64, cfg: &StrategyConfig) -> Tolerances {
    Tolerances {
        dt,
        tol_as: cfg.tol_as.unwrap_or(TOL_AS_PER_DT * dt),
        tolerance_master: cfg.tolerance_master.unwrap_or(TOL_MASTER_PER_DT * dt),
    }
}

fn build_report(
    calibration: &Calibration,
    records: &[PathRecord],
    pilot_paths: usize,
    tol: &Tolerances,
    seed: Option<u64>,
) -> Result<ArbitrageReport> {
    let n = records.len();
    let rels: Vec<f64> = records.iter().map(|r| r.rel_terminal).collect();
    let verdict = verify_relative_arbitrage(&rels, tol.tol_as)?;
    let count = |f: &dyn Fn(&PathRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let nonneg = count(&|r| r.rel_terminal >= -tol.tol_as);
    let strict = count(&|r| r.rel_terminal > tol.tol_as);
    let triggered = count(&|r| r.triggered);
    let strict_triggered = count(&|r| r.triggered && r.rel_terminal > tol.tol_as);
    let residuals: Vec<f64> = records.iter().filter_map(|r| r.residual).collect();
    let p = &calibration.params;
    Ok(ArbitrageReport {
        schema: REPORT_SCHEMA,
        n_paths: n,
        pilot_paths,
        horizon: p.horizon,
        dt: tol.dt,
        seed,
        epsilon: p.epsilon,
        epsilon_source: calibration.epsilon_source,
        min_market_growth: calibration.min_market_growth,
        floor_estimated: calibration.floor_estimated,
        floor_second_half: calibration.floor_second_half,
        floor: p.floor,
        delta: p.delta,
        delta_route: calibration.delta_route,
        delta_lower_bound: calibration.delta_lower_bound,
        c_offset: p.c_offset,
        condition_zero: calibration.condition_zero,
        diversity: calibration.diverse,
        zero_floor_applied: calibration.zero_floor_applied,
        hypothesis_satisfied: calibration.condition_zero && p.epsilon <= calibration.min_market_growth,
        tol_as: tol.tol_as,
        tolerance_master: tol.tolerance_master,
        level_tol: p.level_tol,
        frac_nonnegative: nonneg as f64 / n as f64,
        frac_strict: strict as f64 / n as f64,
        frac_triggered: triggered as f64 / n as f64,
        frac_strict_given_triggered: if triggered == 0 {
            0.0
        } else {
            strict_triggered as f64 / triggered as f64
        },
        mean_rel: rels.iter().sum::<f64>() / n as f64,
        min_rel: rels.iter().cloned().fold(f64::INFINITY, f64::min),
        max_rel: rels.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        arbitrage: verdict.arbitrage,
        strong: verdict.strong,
        residual_count: residuals.len(),
        residual_mean: if residuals.is_empty() {
            0.0
        } else {
            residuals.iter().sum::<f64>() / residuals.len() as f64
        },
        residual_max: residuals.iter().cloned().fold(0.0, f64::max),
        residual_within_tolerance: residuals.iter().filter(|r| **r <= tol.tolerance_master).count(),
        floor_estimator: "minimum over pilot paths and grid points in [0, T/2]".into(),
        tolerance_note: "tol_as and tolerance_master are discretization calibrations, not derived bounds".into(),
    })
}

fn collect_in_order<T>(results: Vec<(u64, Result<T>)>) -> Result<Vec<T>> {
    results
        .into_iter()
        .map(|(seed, r)| {
            r.map_err(|e| Error::PathFailed {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

fn check_common_grid(paths: &[MarketPath]) -> Result<()> {
    if let Some(first) = paths.first() {
        if paths.iter().any(|p| p.times != first.times || p.n() != first.n()) {
            return Err(Error::GridMismatch);
        }
    }
    Ok(())
}

/// Simulates a pilot ensemble for calibration and a disjoint scored
/// ensemble, and runs the switching strategy on every scored path.
pub fn run_ensemble(spec: &ModelSpec, cfg: &EnsembleConfig) -> Result<EnsembleOutcome> {
    spec.validate()?;
    if cfg.n_paths == 0 || cfg.pilot_paths == 0 {
        return Err(Error::InvalidParameter("n_paths and pilot_paths must be at least 1".into()));
    }
    let times = time_grid(cfg.horizon, cfg.dt)?;
    let diversity_delta = cfg.strategy.diversity_delta;

    let pilot = (0..cfg.pilot_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(cfg.master_seed, SeedStream::Pilot, i as u64);
            let summary = simulate_path(spec, cfg.horizon, cfg.dt, seed).and_then(|p| summarize_path(&p, diversity_delta));
            (seed, summary)
        })
        .collect();
    let pilot = collect_in_order(pilot)?;
    let calibration = calibrate(&pilot, spec.n, cfg.horizon, &cfg.strategy)?;

    let params = calibration.params;
    let records = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(cfg.master_seed, SeedStream::Scored, i as u64);
            let record = simulate_path(spec, cfg.horizon, cfg.dt, seed).and_then(|p| score_path(i, &p, &params));
            (seed, record)
        })
        .collect();
    let records = collect_in_order(records)?;

    let tol = tolerances(cfg.dt, &cfg.strategy);
    let report = build_report(&calibration, &records, cfg.pilot_paths, &tol, Some(cfg.master_seed))?;
    Ok(EnsembleOutcome {
        report,
        calibration,
        records,
        times,
    })
}

/// Calibrates on `pilot` and scores `scored`; used for recorded data.
/// Paths must share one grid.
pub fn evaluate_paths(
    pilot: &[MarketPath],
    scored: &[MarketPath],
    cfg: &StrategyConfig,
    seed: Option<u64>,
) -> Result<EnsembleOutcome> {
    if pilot.is_empty() || scored.is_empty() {
        return Err(Error::InvalidParameter("need at least one pilot and one scored path".into()));
    }
    check_common_grid(scored)?;
    let horizon = scored[0].horizon();
    let n = scored[0].n();
    if pilot.iter().any(|p| p.n() != n || (p.horizon() - horizon).abs() > 1e-12 * horizon.max(1.0)) {
        return Err(Error::GridMismatch);
    }
    let summaries: Vec<PathSummary> = pilot
        .iter()
        .map(|p| summarize_path(p, cfg.diversity_delta))
        .collect::<Result<_>>()?;
    let calibration = calibrate(&summaries, n, horizon, cfg)?;
    let params = calibration.params;
    let records: Vec<PathRecord> = scored
        .par_iter()
        .enumerate()
        .map(|(i, p)| score_path(i, p, &params))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let times = scored[0].times.clone();
    let tol = tolerances(grid_step(&times), cfg);
    let report = build_report(&calibration, &records, pilot.len(), &tol, seed)?;
    Ok(EnsembleOutcome {
        report,
        calibration,
        records,
        times,
    })
}

/// `|rel-wealth increment of the S_c portfolio - master_equation_rhs|` over
/// the time segment `[start, end]`.
pub fn master_equation_residual(path: &MarketPath, c: f64, segment: (f64, f64)) -> Result<f64> {
    let ka = path.index_at(segment.0)?;
    let kb = path.index_at(segment.1)?;
    if kb < ka {
        return Err(Error::EmptyWindow {
            start: segment.0,
            end: segment.1,
        });
    }
    let mu: Vec<PortfolioWeights> = (ka..=kb).map(|k| path.weights(k)).collect::<Result<_>>()?;
    let ledger = accumulate_wealth(path, |k| {
        let m = path.weights(k)?;
        if k >= ka && k < kb {
            entropy_portfolio(&m, c)
        } else {
            Ok(m)
        }
    })?;
    let lhs = ledger.relative[kb] - ledger.relative[ka];
    let rhs = master_equation_rhs(&mu, &path.sigma[ka..kb], c, &path.times[ka..=kb])?;
    Ok((lhs - rhs).abs())
}

/// Master-equation residuals of the `S_c` portfolio over `[0, T]` on an
/// ensemble of independent paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub schema: u32,
    pub c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mean: f64,
    pub max: f64,
    pub tolerance_master: f64,
    pub within_tolerance: usize,
}

pub fn residual_study(
    spec: &ModelSpec,
    c: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    master_seed: u64,
    tolerance_master: Option<f64>,
) -> Result<ResidualSummary> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let residuals = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master_seed, SeedStream::Scored, i as u64);
            let r = simulate_path(spec, horizon, dt, seed).and_then(|p| master_equation_residual(&p, c, (0.0, horizon)));
            (seed, r)
        })
        .collect();
    let residuals = collect_in_order(residuals)?;
    let tolerance_master = tolerance_master.unwrap_or(TOL_MASTER_PER_DT * dt);
    Ok(ResidualSummary {
        schema: REPORT_SCHEMA,
        c,
        horizon,
        dt,
        n_paths,
        seed: master_seed,
        mean: residuals.iter().sum::<f64>() / n_paths as f64,
        max: residuals.iter().cloned().fold(0.0, f64::max),
        tolerance_master,
        within_tolerance: residuals.iter().filter(|r| **r <= tolerance_master).count(),
    })
}

/// Pointwise entropy minimum over `n_paths` simulated paths (scored seed
/// stream). Only entropy series are kept in memory.
pub fn entropy_floor_study(spec: &ModelSpec, horizon: f64, dt: f64, n_paths: usize, master_seed: u64) -> Result<FloorCurve> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let times = time_grid(horizon, dt)?;
    let series = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master_seed, SeedStream::Scored, i as u64);
            (seed, simulate_path(spec, horizon, dt, seed).map(|p| p.entropy_series()))
        })
        .collect();
    let series = collect_in_order(series)?;
    FloorCurve::from_series(times, &series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// Mean absolute residual over the coupled paths.
    pub residual: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceVerdict {
    Decreasing,
    NotDecreasing,
    /// Every residual is at rounding level.
    VacuousPass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub verdict: Option<ConvergenceVerdict>,
}

/// Master-equation residual of the `S_c` portfolio over `[0, T]` for each
/// step size in `dts` (strictly decreasing, each a multiple of the last).
/// Every path is driven by one fine Brownian path aggregated onto each
/// coarser grid.
pub fn convergence_study(
    spec: &ModelSpec,
    c: f64,
    horizon: f64,
    dts: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<ConvergenceTable> {
    let finest = *dts
        .last()
        .ok_or_else(|| Error::InvalidParameter("no step sizes given".into()))?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::RefinementIncompatible("step sizes must be strictly decreasing".into()));
    }
    let fine_steps = time_grid(horizon, finest)?.len() - 1;
    let mut factors = Vec::with_capacity(dts.len());
    for &dt in dts {
        time_grid(horizon, dt).map_err(|_| Error::RefinementIncompatible(format!("{dt} does not divide T = {horizon}")))?;
        let f = (dt / finest).round();
        if f < 1.0 || (f * finest - dt).abs() > 1e-9 * dt {
            return Err(Error::RefinementIncompatible(format!("{dt} is not a multiple of {finest}")));
        }
        factors.push(f as usize);
    }
    if factors.windows(2).any(|w| w[0] % w[1] != 0) {
        return Err(Error::RefinementIncompatible("consecutive step sizes are not nested".into()));
    }

    let per_path = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master_seed, SeedStream::Scored, i as u64);
            let bridge = path_seed(master_seed, SeedStream::Bridge, i as u64);
            let fine = brownian_increments(spec.d, fine_steps, finest, seed);
            let res = dts
                .iter()
                .zip(&factors)
                .map(|(&dt, &f)| {
                    let inc = aggregate_increments(&fine, f)?;
                    let path = simulate_path_from_increments(spec, horizon, dt, &inc, bridge)?;
                    master_equation_residual(&path, c, (0.0, horizon))
                })
                .collect::<Result<Vec<f64>>>();
            (seed, res)
        })
        .collect();
    let per_path = collect_in_order(per_path)?;

    let rows: Vec<ConvergenceRow> = dts
        .iter()
        .enumerate()
        .map(|(j, &dt)| {
            let col: Vec<f64> = per_path.iter().map(|r| r[j]).collect();
            ConvergenceRow {
                dt,
                residual: col.iter().sum::<f64>() / col.len() as f64,
                max_residual: col.iter().cloned().fold(0.0, f64::max),
            }
        })
        .collect();
    let verdict = if rows.len() < 2 {
        None
    } else if rows.iter().all(|r| r.max_residual < 1e-12) {
        Some(ConvergenceVerdict::VacuousPass)
    } else if rows.windows(2).all(|w| w[1].residual < w[0].residual) {
        Some(ConvergenceVerdict::Decreasing)
    } else {
        Some(ConvergenceVerdict::NotDecreasing)
    };
    Ok(ConvergenceTable { rows, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn verdict_examples() {
        let v = verify_relative_arbitrage(&[0.0, 0.0, 0.1], 1e-3).unwrap();
        assert!(v.arbitrage && !v.strong);
        let v = verify_relative_arbitrage(&[0.1, 0.2], 1e-3).unwrap();
        assert!(v.arbitrage && v.strong);
        let v = verify_relative_arbitrage(&[-0.1, 0.5], 1e-3).unwrap();
        assert!(!v.arbitrage && !v.weak_dominance && v.strict_gain);
        assert!(verify_relative_arbitrage(&[], 1e-3).is_err());
    }

    #[test]
    fn deterministic_market_is_refused() {
        let spec = ModelSpec::constant(vec![0.05, 0.1], DMatrix::zeros(2, 2), vec![1.0, 2.0]).unwrap();
        let cfg = EnsembleConfig::new(1.0, 0.01, 4, 4, 1);
        let err = run_ensemble(&spec, &cfg).unwrap_err();
        assert!(matches!(err, Error::HypothesisUnsatisfiable(_)), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn single_path_report_matches_record() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
        let cfg = EnsembleConfig::new(1.0, 1e-2, 1, 20, 17);
        let out = run_ensemble(&spec, &cfg).unwrap();
        let r = &out.records[0];
        let rep = &out.report;
        assert_eq!(rep.n_paths, 1);
        assert_eq!(rep.mean_rel, r.rel_terminal);
        assert_eq!(rep.min_rel, r.rel_terminal);
        assert_eq!(rep.max_rel, r.rel_terminal);
        assert_eq!(rep.frac_triggered, if r.triggered { 1.0 } else { 0.0 });
        assert_eq!(r.seed, Some(path_seed(17, SeedStream::Scored, 0)));
    }

    #[test]
    fn report_is_deterministic() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![3.0, 2.0, 1.0]).unwrap();
        let cfg = EnsembleConfig::new(1.0, 1e-2, 30, 10, 5);
        let a = run_ensemble(&spec, &cfg).unwrap();
        let b = run_ensemble(&spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn untriggered_paths_end_at_zero() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
        let cfg = EnsembleConfig::new(1.0, 1e-2, 40, 10, 2);
        let out = run_ensemble(&spec, &cfg).unwrap();
        for r in out.records.iter().filter(|r| !r.triggered) {
            assert_eq!(r.rel_terminal, 0.0);
        }
        let rep = &out.report;
        assert!(rep.frac_strict <= rep.frac_nonnegative && rep.frac_nonnegative <= 1.0);
    }

    #[test]
    fn residual_on_deterministic_paths() {
        let frozen = ModelSpec::constant(vec![0.1; 3], DMatrix::zeros(3, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let path = simulate_path(&frozen, 1.0, 1e-2, 1).unwrap();
        assert!(master_equation_residual(&path, 0.1, (0.0, 1.0)).unwrap() < 1e-12);

        // weights drift without noise: the left-point sum is first order in dt
        let drifting = ModelSpec::constant(vec![0.3, -0.2, 0.05], DMatrix::zeros(3, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let coarse = simulate_path(&drifting, 1.0, 1e-2, 1).unwrap();
        let fine = simulate_path(&drifting, 1.0, 5e-3, 1).unwrap();
        let rc = master_equation_residual(&coarse, 0.1, (0.0, 1.0)).unwrap();
        let rf = master_equation_residual(&fine, 0.1, (0.0, 1.0)).unwrap();
        assert!((rc / rf - 2.0).abs() < 0.05, "{rc} {rf}");
    }

    #[test]
    fn residual_within_tolerance_on_vsm_path() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
        let path = simulate_path(&spec, 1.0, 1e-3, 21).unwrap();
        let r = master_equation_residual(&path, 0.1, (0.0, 1.0)).unwrap();
        assert!(r < TOL_MASTER_PER_DT * 1e-3, "{r}");
    }

    #[test]
    fn convergence_single_row_and_vacuous() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 3]).unwrap();
        let t = convergence_study(&spec, 0.1, 1.0, &[1e-2], 2, 1).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.verdict, None);

        let flat = ModelSpec::constant(vec![0.1, 0.1], DMatrix::zeros(2, 2), vec![1.0, 2.0]).unwrap();
        let t = convergence_study(&flat, 0.1, 1.0, &[1e-1, 2.5e-2], 2, 1).unwrap();
        assert_eq!(t.verdict, Some(ConvergenceVerdict::VacuousPass));
    }

    #[test]
    fn convergence_rejects_unnested() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 3]).unwrap();
        assert!(matches!(
            convergence_study(&spec, 0.1, 1.0, &[1e-2, 4e-3], 2, 1),
            Err(Error::RefinementIncompatible(_))
        ));
        assert!(matches!(
            convergence_study(&spec, 0.1, 1.0, &[1.6e-2, 1e-3], 2, 1),
            Err(Error::RefinementIncompatible(_))
        ));
        assert!(convergence_study(&spec, 0.1, 1.0, &[1e-3, 1e-2], 2, 1).is_err());
    }

    #[test]
    fn convergence_decreases_on_coupled_vsm() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
        let t = convergence_study(&spec, 0.1, 1.0, &[1e-2, 2.5e-3], 20, 3).unwrap();
        assert!(t.rows[1].residual < t.rows[0].residual, "{:?}", t.rows);
    }

    #[test]
    fn floor_study_matches_brute_force() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let curve = entropy_floor_study(&spec, 0.5, 1e-2, 6, 8).unwrap();
        let paths: Vec<MarketPath> = (0..6)
            .map(|i| simulate_path(&spec, 0.5, 1e-2, path_seed(8, SeedStream::Scored, i)).unwrap())
            .collect();
        for (k, v) in curve.values.iter().enumerate() {
            let brute = paths.iter().map(|p| p.entropy_series()[k]).fold(f64::INFINITY, f64::min);
            assert_eq!(*v, brute);
        }
    }

    #[test]
    fn residual_study_counts() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
        let s = residual_study(&spec, 0.1, 1.0, 1e-2, 8, 3, None).unwrap();
        assert_eq!(s.n_paths, 8);
        assert!(s.mean <= s.max && s.within_tolerance <= 8);
        assert_eq!(s.tolerance_master, 0.5);
    }

    #[test]
    fn supplied_epsilon_and_delta() {
        let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 4]).unwrap();
        let mut cfg = EnsembleConfig::new(1.0, 1e-2, 5, 5, 4);
        cfg.strategy.epsilon = EpsilonMode::Supplied(1.0);
        cfg.strategy.delta = DeltaMode::Supplied(0.1);
        let out = run_ensemble(&spec, &cfg).unwrap();
        assert_eq!(out.report.epsilon, 1.0);
        assert_eq!(out.report.delta, 0.1);
        assert_eq!(out.report.delta_route, DeltaRoute::Supplied);
        assert_eq!(out.report.epsilon_source, EpsilonSource::Supplied);
        cfg.strategy.delta = DeltaMode::Supplied(5.0);
        assert!(run_ensemble(&spec, &cfg).is_err());
    }
}
