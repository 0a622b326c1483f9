//! Master-equation residual on paths driven by one Brownian path seen at
//! nested step sizes.

use relarb::ensemble::convergence_study;
use relarb::ModelSpec;

fn main() -> relarb::Result<()> {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5])?;
    let table = convergence_study(&spec, 0.1, 1.0, &[2e-2, 4e-3, 1e-3, 2.5e-4], 50, 3)?;
    println!("{:>10} {:>14} {:>14}", "dt", "mean |res|", "max |res|");
    for row in &table.rows {
        println!("{:>10.2e} {:>14.4e} {:>14.4e}", row.dt, row.residual, row.max_residual);
    }
    println!("verdict: {:?}", table.verdict);
    Ok(())
}
