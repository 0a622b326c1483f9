//! Entropy-generated weights, excess growth rate and one wealth step.

use nalgebra::DMatrix;
use relarb::{entropy, entropy_portfolio, excess_growth_rate, generalized_entropy, market_weights, wealth_step};

fn main() -> relarb::Result<()> {
    let mu = market_weights(&[50.0, 30.0, 15.0, 5.0])?;
    let sigma = DMatrix::from_row_slice(4, 4, &[
        0.04, 0.01, 0.00, 0.00,
        0.01, 0.09, 0.02, 0.00,
        0.00, 0.02, 0.16, 0.03,
        0.00, 0.00, 0.03, 0.25,
    ]);

    println!("market weights  {:?}", mu.as_slice());
    println!("S(mu) = {:.6}", entropy(mu.as_slice())?);
    for c in [0.0, 0.1, 1.0] {
        let pi = entropy_portfolio(&mu, c)?;
        println!(
            "c = {c:<4} S_c = {:.6}  pi = {:.4?}  gamma*_pi = {:.6}",
            generalized_entropy(mu.as_slice(), c)?,
            pi.as_slice(),
            excess_growth_rate(&pi, &sigma)?
        );
    }
    println!("gamma*_mu = {:.6}", excess_growth_rate(&mu, &sigma)?);

    let dlog = [0.002, -0.004, 0.010, -0.015];
    let pi = entropy_portfolio(&mu, 0.1)?;
    let step = wealth_step(&pi, &dlog, &sigma, 1.0 / 252.0)? - wealth_step(&mu, &dlog, &sigma, 1.0 / 252.0)?;
    println!("one-day relative log-wealth change of pi vs mu: {step:.3e}");
    Ok(())
}
