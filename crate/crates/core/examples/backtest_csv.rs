//! Export a simulated path to CSV, read it back with the exact covariances
//! and with a rolling estimate, and compare the two backtests.

use relarb::ensemble::{evaluate_paths, StrategyConfig};
use relarb::io::ingest::{ingest_caps_csv, ingest_with_covariance, write_caps_csv, write_covariance_csv};
use relarb::{simulate_path, ModelSpec};

fn main() -> relarb::Result<()> {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5])?;
    let path = simulate_path(&spec, 1.0, 1e-3, 5)?;

    let mut caps = Vec::new();
    let mut cov = Vec::new();
    write_caps_csv(&mut caps, &path)?;
    write_covariance_csv(&mut cov, &path)?;
    println!("caps csv: {} bytes, covariance csv: {} bytes", caps.len(), cov.len());

    let exact = ingest_with_covariance(caps.as_slice(), cov.as_slice())?;
    let estimated = ingest_caps_csv(caps.as_slice(), 20)?;
    assert_eq!(exact.caps, path.caps);

    let cfg = StrategyConfig::default();
    for (label, p) in [("simulated", &path), ("exact sigma", &exact), ("rolling sigma", &estimated)] {
        let out = evaluate_paths(std::slice::from_ref(p), std::slice::from_ref(p), &cfg, None)?;
        let r = &out.report;
        println!(
            "{label:<14} epsilon = {:.4} A = {:.4} delta = {:.4} rel(T) = {:+.5}",
            r.epsilon, r.floor, r.delta, r.mean_rel
        );
    }
    Ok(())
}
