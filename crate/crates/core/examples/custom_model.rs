//! Plug a user-defined coefficient model into the simulator: volatility
//! that rises as a stock's weight shrinks, with one common factor.

use std::sync::Arc;

use nalgebra::DMatrix;
use relarb::model::Coefficients;
use relarb::{excess_growth_rate, simulate_path, MarketCoefficients, ModelSpec, PortfolioWeights};

struct SizeDependent {
    base: f64,
    common: f64,
}

impl MarketCoefficients for SizeDependent {
    fn coefficients(&self, _t: f64, _caps: &[f64], mu: &PortfolioWeights) -> relarb::Result<Coefficients> {
        let n = mu.len();
        let loadings = DMatrix::from_fn(n, n + 1, |i, nu| {
            if nu == i {
                self.base / mu[i].sqrt()
            } else if nu == n {
                self.common
            } else {
                0.0
            }
        });
        let drift = (0..n).map(|i| 0.5 * self.base * self.base / mu[i]).collect();
        Ok(Coefficients { drift, loadings })
    }
}

fn main() -> relarb::Result<()> {
    let model = Arc::new(SizeDependent { base: 0.3, common: 0.2 });
    let spec = ModelSpec::custom(5, model, vec![5.0, 3.0, 1.0, 0.5])?;
    let path = simulate_path(&spec, 1.0, 1e-3, 1)?;
    let g0 = excess_growth_rate(&path.weights(0)?, &path.sigma[0])?;
    let gt = excess_growth_rate(&path.weights(path.steps() - 1)?, &path.sigma[path.steps() - 1])?;
    // the common factor drops out of gamma*_mu, which stays at base^2 (n - 1) / 2
    println!("gamma*_mu at start {g0:.4}, at end {gt:.4}");
    println!("terminal weights {:.4?}", path.weights(path.steps())?.as_slice());
    Ok(())
}
