//! Simulate a volatility-stabilized market and check that the market's
//! excess growth rate is the constant (n - 1) / 2 along the path.

use relarb::{excess_growth_rate, simulate_path, ModelSpec};

fn main() -> relarb::Result<()> {
    let n = 4;
    let spec = ModelSpec::volatility_stabilized(0.5, vec![4.0, 3.0, 2.0, 1.0])?;
    let path = simulate_path(&spec, 1.0, 1e-3, 42)?;

    let mut worst = 0.0f64;
    for k in 0..path.steps() {
        let g = excess_growth_rate(&path.weights(k)?, &path.sigma[k])?;
        worst = worst.max((g - (n as f64 - 1.0) / 2.0).abs());
    }
    let s = path.entropy_series();
    println!("steps: {}", path.steps());
    println!("terminal weights: {:?}", path.weights(path.steps())?.as_slice());
    println!("entropy: start {:.4}, end {:.4}, ln n {:.4}", s[0], s[path.steps()], (n as f64).ln());
    println!("max |gamma*_mu - (n-1)/2| = {worst:.2e}");
    Ok(())
}
