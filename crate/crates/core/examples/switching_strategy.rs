//! Pick delta for a given entropy floor, find the two stopping times on a
//! path and run the switching portfolio.

use relarb::strategy::{select_delta, DeltaConfig, Phase};
use relarb::{accumulate_wealth, eta_weights_at, simulate_path, ModelSpec, StrategyParams, StrategyState};

fn main() -> relarb::Result<()> {
    let n = 5;
    let (horizon, epsilon) = (1.0, 1.8);
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; n])?;

    for seed in 0..8 {
        let path = simulate_path(&spec, horizon, 1e-3, seed)?;
        let s = path.entropy_series();
        let floor = s.iter().take(501).cloned().fold(f64::INFINITY, f64::min);
        let choice = select_delta(floor, epsilon, horizon, n, &DeltaConfig::default())?;
        let params = StrategyParams::new(floor, choice.delta, epsilon, horizon);
        let state = StrategyState::from_series(params, &path.times, &s);
        let ledger = accumulate_wealth(&path, |k| eta_weights_at(k, &path, &state))?;
        let entropy_steps = (0..path.steps()).filter(|&k| state.phase_at(k) == Phase::Entropy).count();
        println!(
            "seed {seed}: A = {floor:.4} delta = {:.4} ({:?}) tau1 = {:.3} tau2 = {:.3} entropy steps = {entropy_steps:4} rel(T) = {:+.4}",
            choice.delta,
            choice.route,
            state.tau1.time,
            state.tau2.time,
            ledger.terminal_relative()
        );
    }
    Ok(())
}
