//! Compare relative log-wealth of the S_c portfolio with the generator
//! decomposition ln S_c(end) - ln S_c(start) + integral of gamma*_mu / S_c
//! for several offsets c on one path.

use relarb::ensemble::master_equation_residual;
use relarb::{accumulate_wealth, entropy_portfolio, master_equation_rhs, simulate_path, ModelSpec};

fn main() -> relarb::Result<()> {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5])?;
    let path = simulate_path(&spec, 1.0, 1e-3, 7)?;
    let mu: Vec<_> = (0..=path.steps()).map(|k| path.weights(k)).collect::<relarb::Result<_>>()?;
    for c in [0.0, 0.1, 0.5, 2.0] {
        let ledger = accumulate_wealth(&path, |k| entropy_portfolio(&path.weights(k)?, c))?;
        let rhs = master_equation_rhs(&mu, &path.sigma, c, &path.times)?;
        println!(
            "c = {c:<4} wealth side = {:+.5}  generator side = {:+.5}  |residual| = {:.3e}",
            ledger.terminal_relative(),
            rhs,
            master_equation_residual(&path, c, (0.0, 1.0))?
        );
    }
    Ok(())
}
