//! Euler-Maruyama simulation of log-capitalizations.
//!
//! Each grid step applies
//!
//! ```text
//! log X_i(t + h) = log X_i(t) + gamma_i h + sum_nu xi_i,nu dW_nu
//! ```
//!
//! in log space, so capitalizations stay positive. For state-dependent
//! models a step whose variance `h * max_i s_ii` exceeds the model's
//! `max_substep_variance`, or whose result would put a weight at or below
//! the weight floor, is split in two by sampling the Brownian midpoint from
//! its bridge law. Splitting stops after `max_halvings` levels.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{check_floor, covariance_matrix, Coefficients, ModelKind, ModelSpec};
use crate::portfolio::{entropy_unchecked, market_weights, PortfolioWeights};

/// One simulated or ingested trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    /// Grid `0 = t_0 < ... < t_M = T`, in years.
    pub times: Vec<f64>,
    /// `(M + 1) x n` capitalizations.
    pub caps: Vec<Vec<f64>>,
    /// `M x n` log-increments, `ln caps[k+1][i] - ln caps[k][i]`.
    pub dlog_caps: Vec<Vec<f64>>,
    /// Covariance in force at the start of each step (per year).
    pub sigma: Vec<DMatrix<f64>>,
    /// RNG seed that produced the path; `None` for ingested data.
    pub seed: Option<u64>,
}

impl MarketPath {
    /// Builds a path from grid, capitalizations and per-step covariances,
    /// deriving the log-increments from `caps`.
    pub fn from_caps(
        times: Vec<f64>,
        caps: Vec<Vec<f64>>,
        sigma: Vec<DMatrix<f64>>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let dlog_caps = caps
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b.ln() - a.ln()).collect())
            .collect();
        let path = MarketPath {
            times,
            caps,
            dlog_caps,
            sigma,
            seed,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn n(&self) -> usize {
        self.caps[0].len()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("paths have at least one grid point")
    }

    pub fn weights(&self, k: usize) -> Result<PortfolioWeights> {
        market_weights(&self.caps[k])
    }

    /// `S(mu(t_k))` for every grid point.
    pub fn entropy_series(&self) -> Vec<f64> {
        self.caps
            .iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                let mu: Vec<f64> = row.iter().map(|x| x / total).collect();
                entropy_unchecked(&mu)
            })
            .collect()
    }

    /// Index of the grid point at time `t` (the last grid point `<= t`).
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon.max(1.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::TimeOutOfRange(t));
        }
        let k = self.times.partition_point(|&s| s <= t + slack);
        Ok(k.saturating_sub(1))
    }

    /// Checks the structural invariants: increasing grid, positive finite
    /// caps, exact log-increments and symmetric PSD covariances.
    pub fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if m < 2 {
            return Err(Error::InvalidParameter("a path needs at least two grid points".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::InvalidParameter(format!("grid must start at 0, got {}", self.times[0])));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("time grid is not strictly increasing".into()));
        }
        if self.caps.len() != m || self.dlog_caps.len() != m - 1 || self.sigma.len() != m - 1 {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: self.caps.len(),
            });
        }
        let n = self.caps[0].len();
        for row in &self.caps {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            for (index, &value) in row.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositiveCap { index, value });
                }
            }
        }
        for (k, d) in self.dlog_caps.iter().enumerate() {
            for (i, &di) in d.iter().enumerate().take(n) {
                if di != self.caps[k + 1][i].ln() - self.caps[k][i].ln() {
                    return Err(Error::InvalidParameter(format!("log-increment mismatch at step {k}")));
                }
            }
        }
        for s in &self.sigma {
            check_covariance(s, n)?;
        }
        Ok(())
    }
}

/// Symmetric and positive semidefinite up to rounding.
pub(crate) fn check_covariance(s: &DMatrix<f64>, n: usize) -> Result<()> {
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.nrows(),
        });
    }
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::AsymmetricCovariance(asym));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite covariance entry".into()));
    }
    let min_eig = s.clone().symmetric_eigenvalues().min();
    if min_eig < -1e-10 * scale {
        return Err(Error::InvalidParameter(format!(
            "covariance matrix is not positive semidefinite (eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

/// Independent stream tags for [`path_seed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Scored = 0,
    Pilot = 1,
    Bridge = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for path `index` of `stream`, derived from `master` only, so an
/// ensemble is reproducible in any evaluation order.
pub fn path_seed(master: u64, stream: SeedStream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream as u64) ^ index)
}

pub fn path_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid `k * dt` for `k = 0..=M` with `M dt = T`; `dt` must divide `T`.
pub fn time_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon T must be positive, got {horizon}")));
    }
    if !(dt > 0.0) || dt > horizon {
        return Err(Error::InvalidParameter(format!("need 0 < dt <= T, got dt = {dt}")));
    }
    let m = (horizon / dt).round();
    if ((m * dt) - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidParameter(format!("dt = {dt} does not divide T = {horizon}")));
    }
    let m = m as usize;
    let mut times: Vec<f64> = (0..=m).map(|k| k as f64 * dt).collect();
    times[m] = horizon;
    Ok(times)
}

fn weights_from_log(log_caps: &[f64]) -> PortfolioWeights {
    let top = log_caps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_caps.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    PortfolioWeights::new(raw.into_iter().map(|x| x / total).collect())
        .expect("normalized exponentials lie on the simplex")
}

/// Coefficients in force at a state, plus the covariance they imply.
struct Local {
    drift: Vec<f64>,
    loadings: Option<DMatrix<f64>>,
    // VSM loadings are diagonal, `1 / sqrt(mu_i)`
    diag_vol: Option<Vec<f64>>,
    max_var: f64,
}

struct Stepper<'a> {
    spec: &'a ModelSpec,
    constant_sigma: Option<DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a ModelSpec) -> Result<Self> {
        spec.validate()?;
        let constant_sigma = match &spec.kind {
            ModelKind::ConstantCoefficient { xi, .. } => Some(covariance_matrix(xi)),
            _ => None,
        };
        Ok(Stepper { spec, constant_sigma })
    }

    fn local(&self, t: f64, log_caps: &[f64], step: usize) -> Result<Local> {
        match &self.spec.kind {
            ModelKind::ConstantCoefficient { gamma, xi } => Ok(Local {
                drift: gamma.clone(),
                loadings: Some(xi.clone()),
                diag_vol: None,
                max_var: 0.0,
            }),
            ModelKind::VolatilityStabilized { alpha } => {
                let mu = weights_from_log(log_caps);
                check_floor(&mu, self.spec.weight_floor, step)?;
                let m = mu.as_slice();
                Ok(Local {
                    drift: m.iter().map(|w| alpha / (2.0 * w)).collect(),
                    loadings: None,
                    diag_vol: Some(m.iter().map(|w| 1.0 / w.sqrt()).collect()),
                    max_var: m.iter().map(|w| 1.0 / w).fold(0.0, f64::max),
                })
            }
            ModelKind::Custom(c) => {
                let mu = weights_from_log(log_caps);
                check_floor(&mu, self.spec.weight_floor, step)?;
                let caps: Vec<f64> = log_caps.iter().map(|l| l.exp()).collect();
                let Coefficients { drift, loadings } = c.coefficients(t, &caps, &mu)?;
                if drift.len() != self.spec.n {
                    return Err(Error::DimensionMismatch {
                        expected: self.spec.n,
                        actual: drift.len(),
                    });
                }
                if loadings.nrows() != self.spec.n || loadings.ncols() != self.spec.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.spec.d,
                        actual: loadings.ncols(),
                    });
                }
                let max_var = (0..self.spec.n)
                    .map(|i| loadings.row(i).norm_squared())
                    .fold(0.0, f64::max);
                Ok(Local {
                    drift,
                    loadings: Some(loadings),
                    diag_vol: None,
                    max_var,
                })
            }
        }
    }

    fn sigma_at(&self, t: f64, log_caps: &[f64], step: usize) -> Result<DMatrix<f64>> {
        if let Some(s) = &self.constant_sigma {
            return Ok(s.clone());
        }
        let local = self.local(t, log_caps, step)?;
        Ok(match (local.diag_vol, local.loadings) {
            (Some(v), _) => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                v.len(),
                v.iter().map(|x| x * x),
            )),
            (None, Some(xi)) => covariance_matrix(&xi),
            (None, None) => unreachable!("every model supplies loadings"),
        })
    }

    fn trial(&self, local: &Local, log_caps: &[f64], h: f64, dw: &[f64]) -> Vec<f64> {
        let n = self.spec.n;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let noise = match (&local.diag_vol, &local.loadings) {
                (Some(v), _) => v[i] * dw[i],
                (None, Some(xi)) => {
                    let mut acc = 0.0;
                    for nu in 0..self.spec.d {
                        acc += xi[(i, nu)] * dw[nu];
                    }
                    acc
                }
                (None, None) => unreachable!("every model supplies loadings"),
            };
            out.push(log_caps[i] + local.drift[i] * h + noise);
        }
        out
    }

    /// Advances `log_caps` over `[t, t + h]` driven by the Brownian
    /// increment `dw`.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        log_caps: &mut Vec<f64>,
        t: f64,
        h: f64,
        dw: &[f64],
        bridge: &mut ChaCha8Rng,
        depth: u32,
        step: usize,
    ) -> Result<()> {
        let refinable = self.spec.is_state_dependent() && depth < self.spec.max_halvings;
        let local = self.local(t, log_caps, step)?;
        if refinable && h * local.max_var > self.spec.max_substep_variance {
            return self.split(log_caps, t, h, dw, bridge, depth, step);
        }
        let next = self.trial(&local, log_caps, h, dw);
        if next.iter().any(|v| !v.is_finite() || v.exp() == 0.0 || !v.exp().is_finite()) {
            if refinable {
                return self.split(log_caps, t, h, dw, bridge, depth, step);
            }
            return Err(Error::NonFinite { step });
        }
        if self.spec.is_state_dependent() {
            if let Err(e) = check_floor(&weights_from_log(&next), self.spec.weight_floor, step) {
                if refinable {
                    return self.split(log_caps, t, h, dw, bridge, depth, step);
                }
                return Err(e);
            }
        }
        *log_caps = next;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &self,
        log_caps: &mut Vec<f64>,
        t: f64,
        h: f64,
        dw: &[f64],
        bridge: &mut ChaCha8Rng,
        depth: u32,
        step: usize,
    ) -> Result<()> {
        // W(h/2) | W(h) = dw  ~  N(dw / 2, h / 4)
        let sd = (h / 4.0).sqrt();
        let first: Vec<f64> = dw
            .iter()
            .map(|w| {
                let z: f64 = StandardNormal.sample(bridge);
                0.5 * w + sd * z
            })
            .collect();
        let second: Vec<f64> = dw.iter().zip(&first).map(|(w, a)| w - a).collect();
        self.advance(log_caps, t, 0.5 * h, &first, bridge, depth + 1, step)?;
        self.advance(log_caps, t + 0.5 * h, 0.5 * h, &second, bridge, depth + 1, step)
    }
}

fn run<F>(spec: &ModelSpec, times: Vec<f64>, seed: Option<u64>, bridge: &mut ChaCha8Rng, mut increment: F) -> Result<MarketPath>
where
    F: FnMut(usize, f64, &mut ChaCha8Rng) -> Vec<f64>,
{
    let stepper = Stepper::new(spec)?;
    let steps = times.len() - 1;
    let mut log_caps: Vec<f64> = spec.initial_caps.iter().map(|x| x.ln()).collect();
    let mut caps = Vec::with_capacity(steps + 1);
    let mut sigma = Vec::with_capacity(steps);
    caps.push(spec.initial_caps.clone());
    for k in 0..steps {
        let (t, h) = (times[k], times[k + 1] - times[k]);
        sigma.push(stepper.sigma_at(t, &log_caps, k)?);
        let dw = increment(k, h, bridge);
        let before = log_caps.clone();
        stepper.advance(&mut log_caps, t, h, &dw, bridge, 0, k)?;
        let row: Vec<f64> = caps[k]
            .iter()
            .zip(log_caps.iter().zip(&before))
            .map(|(x, (b, a)): (&f64, (&f64, &f64))| x * (b - a).exp())
            .collect();
        if row.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        caps.push(row);
    }
    let dlog_caps = caps
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b.ln() - a.ln()).collect())
        .collect();
    Ok(MarketPath {
        times,
        caps,
        dlog_caps,
        sigma,
        seed,
    })
}

/// Simulates one path on the grid `k * dt`, `k = 0..=T/dt`.
///
/// Each step draws `d` standard normals from the path's generator in
/// driver order; any bridge samples needed for refinement come from the
/// same generator afterwards.
pub fn simulate_path(spec: &ModelSpec, horizon: f64, dt: f64, seed: u64) -> Result<MarketPath> {
    let times = time_grid(horizon, dt)?;
    let d = spec.d;
    let mut rng = path_rng(seed);
    run(spec, times, Some(seed), &mut rng, |_, h, rng| {
        let sd = h.sqrt();
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    })
}

/// Simulates with caller-supplied Brownian increments (`M x d`), used to
/// couple paths across step sizes. Bridge samples for refined steps are
/// drawn from `bridge_seed`.
pub fn simulate_path_from_increments(
    spec: &ModelSpec,
    horizon: f64,
    dt: f64,
    increments: &[Vec<f64>],
    bridge_seed: u64,
) -> Result<MarketPath> {
    let times = time_grid(horizon, dt)?;
    if increments.len() != times.len() - 1 {
        return Err(Error::DimensionMismatch {
            expected: times.len() - 1,
            actual: increments.len(),
        });
    }
    if let Some(row) = increments.iter().find(|r| r.len() != spec.d) {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            actual: row.len(),
        });
    }
    let mut bridge = path_rng(bridge_seed);
    run(spec, times, None, &mut bridge, |k, _, _| increments[k].clone())
}

/// Standard-normal Brownian increments on the grid `k * dt` (`M x d`).
pub fn brownian_increments(d: usize, steps: usize, dt: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = path_rng(seed);
    let sd = dt.sqrt();
    (0..steps)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                })
                .collect()
        })
        .collect()
}

/// Sums consecutive groups of `factor` increments.
pub fn aggregate_increments(fine: &[Vec<f64>], factor: usize) -> Result<Vec<Vec<f64>>> {
    if factor == 0 || !fine.len().is_multiple_of(factor) {
        return Err(Error::RefinementIncompatible(format!(
            "{} fine steps cannot be grouped by {factor}",
            fine.len()
        )));
    }
    Ok(fine
        .chunks(factor)
        .map(|chunk| {
            let mut acc = vec![0.0; chunk[0].len()];
            for row in chunk {
                for (a, b) in acc.iter_mut().zip(row) {
                    *a += b;
                }
            }
            acc
        })
        .collect())
}
