use nalgebra::DMatrix;
use proptest::prelude::*;

use relarb::ensemble::{run_ensemble, verify_relative_arbitrage, EnsembleConfig, EpsilonMode};
use relarb::io::report::{from_json, to_json};
use relarb::portfolio::{generalized_entropy, wealth_step};
use relarb::strategy::{select_delta, terminal_gain_bound, DeltaConfig, Phase};
use relarb::{
    accumulate_wealth, entropy_portfolio, eta_weights_at, simulate_path, ArbitrageReport, ModelSpec,
    PortfolioWeights, StrategyParams, StrategyState,
};

fn vsm_path(n: usize, alpha: f64, seed: u64) -> relarb::MarketPath {
    let spec = ModelSpec::volatility_stabilized(alpha, vec![1.0; n]).unwrap();
    simulate_path(&spec, 1.0, 5e-3, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stopping_times_are_ordered(seed in any::<u64>(), a_frac in 0.0..0.9f64, d_frac in 0.01..0.45f64) {
        let path = vsm_path(4, 0.5, seed);
        let ln_n = 4f64.ln();
        let floor = a_frac * ln_n;
        let delta = d_frac * (ln_n - floor);
        let state = StrategyState::for_path(StrategyParams::new(floor, delta, 1.0, 1.0), &path);
        prop_assert!(state.tau1.time <= state.tau2.time);
        prop_assert!(state.tau2.time <= 1.0);
        prop_assert!(state.tau1.index <= state.tau2.index);
    }

    #[test]
    fn eta_is_market_outside_entropy_phase(seed in any::<u64>(), a_frac in 0.0..0.8f64) {
        let path = vsm_path(5, 0.5, seed);
        let ln_n = 5f64.ln();
        let floor = a_frac * ln_n;
        let delta = 0.2 * (ln_n - floor);
        let state = StrategyState::for_path(StrategyParams::new(floor, delta, 1.0, 1.0), &path);
        for k in 0..=path.steps() {
            let eta = eta_weights_at(k, &path, &state).unwrap();
            let mu = path.weights(k).unwrap();
            if state.phase_at(k) == Phase::Entropy {
                prop_assert_eq!(eta, entropy_portfolio(&mu, delta).unwrap());
            } else {
                prop_assert_eq!(eta, mu);
            }
        }
    }

    #[test]
    fn generator_gain_between_stopping_times(seed in any::<u64>()) {
        let path = vsm_path(5, 0.5, seed);
        let s = path.entropy_series();
        let floor = 0.5 * s.iter().cloned().fold(f64::INFINITY, f64::min);
        let delta = 0.1;
        let params = StrategyParams::new(floor, delta, 1.0, 1.0);
        let state = StrategyState::from_series(params, &path.times, &s);
        if state.triggered() && state.tau2.time < 1.0 {
            let lt = params.level_tol;
            let g1 = generalized_entropy(path.weights(state.tau1.index).unwrap().as_slice(), delta).unwrap();
            let g2 = generalized_entropy(path.weights(state.tau2.index).unwrap().as_slice(), delta).unwrap();
            let bound = ((floor + 3.0 * delta - lt) / (floor + 2.0 * delta + lt)).ln();
            prop_assert!(g2.ln() - g1.ln() >= bound - 1e-12);
        }
    }

    #[test]
    fn selected_delta_is_feasible(a in 0.0..2.0f64, eps in 0.01..3.0f64, t in 0.1..2.0f64, n in 3usize..40) {
        prop_assume!(a < (n as f64).ln() * 0.95);
        let c = select_delta(a, eps, t, n, &DeltaConfig::default()).unwrap();
        prop_assert!(a + 2.0 * c.delta < (n as f64).ln());
        prop_assert!(c.delta > 0.0);
        if a > 1e-9 {
            prop_assert!(terminal_gain_bound(a, c.delta, eps, t) >= c.margin_pos);
        }
    }

    #[test]
    fn relative_wealth_is_additive(seed in any::<u64>()) {
        let path = vsm_path(3, 1.0, seed);
        let ledger = accumulate_wealth(&path, |k| entropy_portfolio(&path.weights(k)?, 0.2)).unwrap();
        let mut rel = 0.0;
        for k in 0..path.steps() {
            let dt = path.times[k + 1] - path.times[k];
            let mu = path.weights(k).unwrap();
            let pi = entropy_portfolio(&mu, 0.2).unwrap();
            rel += wealth_step(&pi, &path.dlog_caps[k], &path.sigma[k], dt).unwrap()
                - wealth_step(&mu, &path.dlog_caps[k], &path.sigma[k], dt).unwrap();
        }
        prop_assert!((ledger.terminal_relative() - rel).abs() < 1e-12);
    }

    #[test]
    fn verdict_is_consistent(rels in prop::collection::vec(-1.0..1.0f64, 1..50), tol in 0.0..0.1f64) {
        let v = verify_relative_arbitrage(&rels, tol).unwrap();
        prop_assert_eq!(v.arbitrage, v.weak_dominance && v.strict_gain);
        if v.strong {
            prop_assert!(v.arbitrage);
        }
    }

    #[test]
    fn market_wealth_matches_total_cap_for_constant_models(seed in any::<u64>()) {
        let xi = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.0, 0.3]);
        let spec = ModelSpec::constant(vec![0.1, 0.02], xi, vec![1.0, 3.0]).unwrap();
        let path = simulate_path(&spec, 1.0, 1e-3, seed).unwrap();
        let ledger = accumulate_wealth(&path, |k| path.weights(k)).unwrap();
        // the market ledger is a left-point sum; it tracks ln(total cap) to O(sqrt(dt))
        prop_assert!(ledger.market_tracking_error() < 0.1);
        prop_assert_eq!(ledger.terminal_relative(), 0.0);
    }
}

#[test]
fn report_fractions_are_ordered_and_round_trip() {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0; 5]).unwrap();
    for seed in 0..3 {
        let mut cfg = EnsembleConfig::new(1.0, 1e-2, 60, 20, seed);
        cfg.strategy.epsilon = EpsilonMode::Supplied(1.8);
        let out = run_ensemble(&spec, &cfg).unwrap();
        let r = &out.report;
        assert!(0.0 <= r.frac_strict && r.frac_strict <= r.frac_nonnegative && r.frac_nonnegative <= 1.0);
        assert!(r.min_rel <= r.mean_rel && r.mean_rel <= r.max_rel);
        let back: ArbitrageReport = from_json(&to_json(r).unwrap()).unwrap();
        assert_eq!(&back, r);
    }
}

#[test]
fn uniform_market_weights_have_maximal_entropy() {
    let mu = PortfolioWeights::uniform(7);
    let s = generalized_entropy(mu.as_slice(), 0.0).unwrap();
    assert!((s - 7f64.ln()).abs() < 1e-15);
    assert_eq!(entropy_portfolio(&mu, 0.3).unwrap(), mu);
}
