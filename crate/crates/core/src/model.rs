//! Market model parameterizations.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::portfolio::PortfolioWeights;

/// Default lower bound on market weights for state-dependent models.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-14;

/// Default bound on `h * max_i s_ii` for one (sub)step of a state-dependent
/// model. Steps exceeding it are split.
pub const DEFAULT_MAX_SUBSTEP_VARIANCE: f64 = 0.05;

/// Maximum number of times a single grid step may be halved.
pub const DEFAULT_MAX_HALVINGS: u32 = 50;

/// Drift vector (per year) and volatility loadings (n x d, per sqrt-year).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub drift: Vec<f64>,
    pub loadings: DMatrix<f64>,
}

/// User-supplied state-dependent coefficients for `d log X_i`.
pub trait MarketCoefficients: Send + Sync {
    fn coefficients(&self, t: f64, caps: &[f64], mu: &PortfolioWeights) -> Result<Coefficients>;
}

#[derive(Clone)]
pub enum ModelKind {
    /// Constant drift `gamma` and loadings `xi` (n x d).
    ConstantCoefficient { gamma: Vec<f64>, xi: DMatrix<f64> },
    /// `d log X_i = alpha / (2 mu_i) dt + mu_i^{-1/2} dW_i`.
    VolatilityStabilized { alpha: f64 },
    Custom(Arc<dyn MarketCoefficients>),
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::ConstantCoefficient { gamma, xi } => f
                .debug_struct("ConstantCoefficient")
                .field("gamma", gamma)
                .field("xi", xi)
                .finish(),
            ModelKind::VolatilityStabilized { alpha } => f
                .debug_struct("VolatilityStabilized")
                .field("alpha", alpha)
                .finish(),
            ModelKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub n: usize,
    pub d: usize,
    pub kind: ModelKind,
    pub initial_caps: Vec<f64>,
    pub weight_floor: f64,
    pub max_substep_variance: f64,
    /// Depth limit for step splitting.
    pub max_halvings: u32,
}

impl ModelSpec {
    pub fn constant(gamma: Vec<f64>, xi: DMatrix<f64>, initial_caps: Vec<f64>) -> Result<Self> {
        let spec = ModelSpec {
            n: xi.nrows(),
            d: xi.ncols(),
            kind: ModelKind::ConstantCoefficient { gamma, xi },
            initial_caps,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            max_substep_variance: DEFAULT_MAX_SUBSTEP_VARIANCE,
            max_halvings: DEFAULT_MAX_HALVINGS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn volatility_stabilized(alpha: f64, initial_caps: Vec<f64>) -> Result<Self> {
        let n = initial_caps.len();
        let spec = ModelSpec {
            n,
            d: n,
            kind: ModelKind::VolatilityStabilized { alpha },
            initial_caps,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            max_substep_variance: DEFAULT_MAX_SUBSTEP_VARIANCE,
            max_halvings: DEFAULT_MAX_HALVINGS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn custom(d: usize, coefficients: Arc<dyn MarketCoefficients>, initial_caps: Vec<f64>) -> Result<Self> {
        let spec = ModelSpec {
            n: initial_caps.len(),
            d,
            kind: ModelKind::Custom(coefficients),
            initial_caps,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            max_substep_variance: DEFAULT_MAX_SUBSTEP_VARIANCE,
            max_halvings: DEFAULT_MAX_HALVINGS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidModel(format!("need n >= 2 stocks, got {}", self.n)));
        }
        if self.d < self.n {
            return Err(Error::InvalidModel(format!(
                "need d >= n Brownian drivers, got d = {} < n = {}",
                self.d, self.n
            )));
        }
        if self.initial_caps.len() != self.n {
            return Err(Error::InvalidModel(format!(
                "initial_caps has {} entries, expected {}",
                self.initial_caps.len(),
                self.n
            )));
        }
        if let Some(x) = self.initial_caps.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidModel(format!("initial capitalization {x} is not positive")));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0 / self.n as f64) {
            return Err(Error::InvalidModel(format!("weight floor {} out of range", self.weight_floor)));
        }
        if !(self.max_substep_variance > 0.0) {
            return Err(Error::InvalidModel("max_substep_variance must be positive".into()));
        }
        match &self.kind {
            ModelKind::ConstantCoefficient { gamma, xi } => {
                if gamma.len() != self.n {
                    return Err(Error::InvalidModel(format!(
                        "gamma has {} entries, expected {}",
                        gamma.len(),
                        self.n
                    )));
                }
                if xi.nrows() != self.n || xi.ncols() != self.d {
                    return Err(Error::InvalidModel(format!(
                        "xi is {}x{}, expected {}x{}",
                        xi.nrows(),
                        xi.ncols(),
                        self.n,
                        self.d
                    )));
                }
                if gamma.iter().chain(xi.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("non-finite coefficient".into()));
                }
            }
            ModelKind::VolatilityStabilized { alpha } => {
                if !(*alpha >= 0.0) || !alpha.is_finite() {
                    return Err(Error::InvalidModel(format!("alpha must be >= 0, got {alpha}")));
                }
                if self.d != self.n {
                    return Err(Error::InvalidModel("volatility-stabilized model uses d = n".into()));
                }
                let mu: f64 = self.initial_caps.iter().sum();
                if let Some(x) = self
                    .initial_caps
                    .iter()
                    .find(|x| **x / mu <= self.weight_floor)
                {
                    return Err(Error::InvalidModel(format!(
                        "initial weight {} is at or below the weight floor",
                        x / mu
                    )));
                }
            }
            ModelKind::Custom(_) => {}
        }
        Ok(())
    }

    /// Whether the coefficients depend on the state (and the step may be
    /// refined).
    pub fn is_state_dependent(&self) -> bool {
        !matches!(self.kind, ModelKind::ConstantCoefficient { .. })
    }
}

/// `sum_nu xi_i,nu xi_j,nu`.
pub fn covariance_of_loadings(xi_row_i: &[f64], xi_row_j: &[f64]) -> Result<f64> {
    if xi_row_i.len() != xi_row_j.len() {
        return Err(Error::DimensionMismatch {
            expected: xi_row_i.len(),
            actual: xi_row_j.len(),
        });
    }
    Ok(xi_row_i.iter().zip(xi_row_j).map(|(a, b)| a * b).sum())
}

/// Covariance matrix `xi xi'` assembled entry by entry.
pub fn covariance_matrix(xi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = xi.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| xi.row(i).iter().cloned().collect()).collect();
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = covariance_of_loadings(&rows[i], &rows[j]).expect("rows share a length");
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    sigma
}

/// Volatility-stabilized drift `alpha / (2 mu_i)` and covariance
/// `diag(1 / mu_i)`, using [`DEFAULT_WEIGHT_FLOOR`].
pub fn vsm_coefficients(mu: &PortfolioWeights, alpha: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    vsm_coefficients_with_floor(mu, alpha, DEFAULT_WEIGHT_FLOOR)
}

pub fn vsm_coefficients_with_floor(
    mu: &PortfolioWeights,
    alpha: f64,
    floor: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_floor(mu, floor, 0)?;
    let drift = mu.as_slice().iter().map(|m| alpha / (2.0 * m)).collect();
    let var = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        mu.len(),
        mu.as_slice().iter().map(|m| 1.0 / m),
    ));
    Ok((drift, var))
}

pub(crate) fn check_floor(mu: &PortfolioWeights, floor: f64, step: usize) -> Result<()> {
    for (index, &weight) in mu.as_slice().iter().enumerate() {
        if !(weight > floor) {
            return Err(Error::WeightFloor {
                step,
                index,
                weight,
                floor,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::excess_growth_rate;
    use rand::{Rng, SeedableRng};

    #[test]
    fn vsm_coefficient_examples() {
        let (drift, var) = vsm_coefficients(&PortfolioWeights::uniform(2), 0.0).unwrap();
        assert_eq!(drift, vec![0.0, 0.0]);
        assert_eq!(var, DMatrix::from_diagonal_element(2, 2, 2.0));

        let (drift, var) = vsm_coefficients(&PortfolioWeights::uniform(4), 1.0).unwrap();
        assert_eq!(drift, vec![2.0; 4]);
        assert_eq!(var, DMatrix::from_diagonal_element(4, 4, 4.0));
    }

    #[test]
    fn vsm_excess_growth_is_half_n_minus_one() {
        // gamma*_mu = 1/2 (sum mu_i / mu_i - sum mu_i^2 / mu_i) = (n - 1) / 2
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 2..12 {
            for _ in 0..50 {
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let mu = PortfolioWeights::new(raw.iter().map(|x| x / total).collect()).unwrap();
                let (_, var) = vsm_coefficients(&mu, 0.7).unwrap();
                let g = excess_growth_rate(&mu, &var).unwrap();
                assert!((g - (n as f64 - 1.0) / 2.0).abs() < 1e-12, "n={n} g={g}");
            }
        }
    }

    #[test]
    fn vsm_floor_violation() {
        let mu = PortfolioWeights::new(vec![1.0 - 1e-15, 1e-15]).unwrap();
        assert!(matches!(
            vsm_coefficients(&mu, 0.5),
            Err(Error::WeightFloor { index: 1, .. })
        ));
        let mu = PortfolioWeights::new(vec![1.0 - 1e-7, 1e-7]).unwrap();
        assert!(vsm_coefficients(&mu, 0.5).is_ok());
        assert!(matches!(
            vsm_coefficients_with_floor(&mu, 0.5, 1e-6),
            Err(Error::WeightFloor { index: 1, .. })
        ));
    }

    #[test]
    fn loadings_covariance() {
        assert_eq!(covariance_of_loadings(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(covariance_of_loadings(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert!(covariance_of_loadings(&[1.0], &[1.0, 2.0]).is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut acc = 0.0;
            for k in 0..5 {
                acc += a[k] * b[k];
            }
            assert!((covariance_of_loadings(&a, &b).unwrap() - acc).abs() <= 1e-15);
        }
    }

    #[test]
    fn covariance_matrix_matches_product() {
        let xi = DMatrix::from_row_slice(2, 3, &[0.2, 0.1, 0.0, -0.3, 0.0, 0.4]);
        let expected = &xi * xi.transpose();
        assert!((covariance_matrix(&xi) - expected).amax() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::volatility_stabilized(0.5, vec![1.0]).is_err());
        assert!(ModelSpec::volatility_stabilized(-0.1, vec![1.0, 1.0]).is_err());
        assert!(ModelSpec::volatility_stabilized(0.5, vec![1.0, 0.0]).is_err());
        assert!(ModelSpec::constant(vec![0.0; 2], DMatrix::identity(2, 1), vec![1.0, 1.0]).is_err());
        assert!(ModelSpec::constant(vec![0.0; 3], DMatrix::identity(2, 2), vec![1.0, 1.0]).is_err());
        assert!(ModelSpec::constant(vec![0.0; 2], DMatrix::identity(2, 3), vec![1.0, 1.0]).is_ok());
    }
}
