//! Entropy-floor curve of an ensemble and the diversity check, for a
//! balanced start and for a market dominated by one stock.

use relarb::ensemble::entropy_floor_study;
use relarb::sim::{path_seed, SeedStream};
use relarb::strategy::is_diverse;
use relarb::{simulate_path, ModelSpec};

fn main() -> relarb::Result<()> {
    for (label, caps) in [("balanced", vec![1.0; 5]), ("dominated", vec![1.0, 2e-5, 2e-5, 2e-5, 2e-5])] {
        let spec = ModelSpec::volatility_stabilized(0.5, caps)?;
        let curve = entropy_floor_study(&spec, 1.0, 1e-3, 200, 9)?;
        let (a, b) = curve.longest_nondecreasing;
        let first = simulate_path(&spec, 1.0, 1e-3, path_seed(9, SeedStream::Scored, 0))?;
        println!(
            "{label:<10} floor at t=0: {:.3e}  at T/2: {:.3e}  at T: {:.3e}  nondecreasing on [{:.3}, {:.3}]  path 0 diverse on [0, T/2]: {}",
            curve.values[0],
            curve.values[500],
            curve.values[1000],
            curve.times[a],
            curve.times[b],
            is_diverse(&first, 1e-3, (0.0, 0.5))?
        );
    }
    Ok(())
}
