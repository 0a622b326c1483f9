//! Calibrate on a pilot ensemble, score a disjoint ensemble and print the
//! report as JSON.

use relarb::ensemble::{run_ensemble, EnsembleConfig};
use relarb::io::report::to_json;
use relarb::ModelSpec;

fn main() -> relarb::Result<()> {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5])?;
    let cfg = EnsembleConfig::new(1.0, 1e-3, 400, 100, 11);
    let out = run_ensemble(&spec, &cfg)?;
    print!("{}", to_json(&out.report)?);

    let r = &out.report;
    println!(
        "\n{} of {} paths triggered; arbitrage = {}, strong = {}",
        (r.frac_triggered * r.n_paths as f64).round(),
        r.n_paths,
        r.arbitrage,
        r.strong
    );
    Ok(())
}
