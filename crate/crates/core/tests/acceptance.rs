//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use relarb::ensemble::{
    convergence_study, evaluate_paths, run_ensemble, ConvergenceVerdict, EnsembleConfig, EnsembleOutcome, EpsilonMode,
};
use relarb::io::ingest::{ingest_with_covariance, write_caps_csv, write_covariance_csv};
use relarb::io::report::to_json;
use relarb::portfolio::{entropy, entropy_portfolio, excess_growth_rate, market_weights, PortfolioWeights};
use relarb::sim::{path_rng, path_seed, simulate_path, SeedStream};
use relarb::strategy::{
    is_diverse, select_delta, terminal_gain_bound, zero_floor_delta, DeltaConfig, DeltaRoute, StrategyParams,
    StrategyState,
};
use relarb::{accumulate_wealth, eta_weights_at, MarketPath, ModelSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const SEED: u64 = 20_240_601;

fn vsm(n: usize, alpha: f64) -> ModelSpec {
    ModelSpec::volatility_stabilized(alpha, vec![1.0; n]).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut steps = 0usize;
    for n in [2usize, 4, 8] {
        let spec = vsm(n, 0.5);
        let target = (n as f64 - 1.0) / 2.0;
        for i in 0..20 {
            let path = simulate_path(&spec, 1.0, 1e-3, path_seed(SEED, SeedStream::Scored, i)).unwrap();
            for k in 0..path.steps() {
                let mu = path.weights(k).unwrap();
                let g = excess_growth_rate(&mu, &path.sigma[k]).unwrap();
                worst = worst.max((g - target).abs());
                steps += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max |gamma* - (n-1)/2| = {worst:.3e} over {steps} steps (tol 1e-9)"),
    )
}

fn random_simplex<R: Rng>(rng: &mut R, n: usize, with_zeros: bool) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    if with_zeros {
        let zeros = rng.random_range(0..n);
        for v in x.iter_mut().take(zeros) {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

fn criterion_2() -> Outcome {
    let mut rng = path_rng(SEED);
    let mut failures = Vec::new();
    let mut worst_sum = 0.0f64;
    let mut worst_gamma = 0.0f64;
    for sample in 0..10_000 {
        let n = rng.random_range(2..=16);
        let x = random_simplex(&mut rng, n, sample % 4 == 0);
        let s = entropy(&x).unwrap();
        if !(s >= 0.0 && s <= (n as f64).ln() + 1e-12) {
            failures.push(format!("S = {s} outside [0, ln {n}]"));
        }

        let interior = random_simplex(&mut rng, n, false);
        let mu = PortfolioWeights::new(interior).unwrap();
        let c = if sample % 5 == 0 { 0.0 } else { rng.random::<f64>() };
        let pi = entropy_portfolio(&mu, c).unwrap();
        worst_sum = worst_sum.max((pi.as_slice().iter().sum::<f64>() - 1.0).abs());
        if pi.as_slice().iter().any(|w| !(*w > 0.0)) {
            failures.push(format!("non-positive entropy weight at n = {n}, c = {c}"));
        }

        let d = rng.random_range(1..=n + 2);
        let a = DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let sigma = &a * a.transpose();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let w = PortfolioWeights::new(random_simplex(&mut rng, n, sample % 3 == 0)).unwrap();
        let g = excess_growth_rate(&w, &sigma).unwrap();
        worst_gamma = worst_gamma.min(g);
        if g < -1e-12 {
            failures.push(format!("gamma* = {g} for nonnegative weights"));
        }
    }
    if worst_sum > 1e-12 {
        failures.push(format!("entropy weights sum off by {worst_sum:e}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "10000 samples: {} violations, max |sum pi - 1| = {worst_sum:.2e}, min gamma* = {worst_gamma:.2e}{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_3() -> Outcome {
    let table = convergence_study(&vsm(5, 0.5), 0.1, 1.0, &[4e-3, 1e-3, 2.5e-4], 50, SEED).unwrap();
    let r: Vec<f64> = table.rows.iter().map(|row| row.residual).collect();
    let pass = r[1] < r[0] && r[2] < r[1] && r[1] < 5e-2;
    outcome(
        pass,
        format!(
            "mean |residual| at dt 4e-3, 1e-3, 2.5e-4: {:.4e}, {:.4e}, {:.4e} (need decreasing and r(1e-3) < 5e-2); verdict {:?}",
            r[0],
            r[1],
            r[2],
            table.verdict.unwrap_or(ConvergenceVerdict::NotDecreasing)
        ),
    )
}

fn prop1_checks(out: &EnsembleOutcome) -> (bool, String) {
    let rep = &out.report;
    let tol = rep.tol_as;
    let all_nonneg = out.records.iter().all(|r| r.rel_terminal >= -tol);
    let triggered: Vec<_> = out.records.iter().filter(|r| r.tau1 <= rep.horizon / 2.0).collect();
    let strict = triggered.iter().filter(|r| r.rel_terminal > tol).count();
    let frac = if triggered.is_empty() {
        0.0
    } else {
        strict as f64 / triggered.len() as f64
    };
    let pass = all_nonneg && frac >= 0.99 && !triggered.is_empty();
    (
        pass,
        format!(
            "(a) rel(T) >= -tol_as on {}/{} paths; (b) {strict}/{} triggered paths above +tol_as ({:.2}%, need 99%); (c) frac_triggered = {:.3}; min rel {:.4}, tol_as {:.1e}",
            out.records.iter().filter(|r| r.rel_terminal >= -tol).count(),
            out.records.len(),
            triggered.len(),
            100.0 * frac,
            rep.frac_triggered,
            rep.min_rel,
            tol
        ),
    )
}

fn prop1_config() -> EnsembleConfig {
    let mut cfg = EnsembleConfig::new(1.0, 1e-3, 1000, 200, SEED);
    cfg.strategy.epsilon = EpsilonMode::Supplied(0.9 * (5.0 - 1.0) / 2.0);
    cfg
}

fn criterion_4() -> Outcome {
    match run_ensemble(&vsm(5, 0.5), &prop1_config()) {
        Ok(out) => {
            let (pass, detail) = prop1_checks(&out);
            outcome(
                pass,
                format!("{detail}; A = {:.4}, delta = {:.4}", out.report.floor, out.report.delta),
            )
        }
        Err(e) => outcome(false, format!("ensemble failed: {e}")),
    }
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut mislabeled = 0;
    let models = [
        vsm(5, 0.5),
        ModelSpec::constant(
            vec![0.05, 0.1, -0.02],
            DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, 0.0, 0.25, 0.05, 0.1, 0.0, 0.2]),
            vec![3.0, 2.0, 1.0],
        )
        .unwrap(),
    ];
    for spec in &models {
        for i in 0..100 {
            let path = simulate_path(spec, 1.0, 1e-3, path_seed(SEED, SeedStream::Scored, i)).unwrap();
            let s = path.entropy_series();
            let min_s = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let params = StrategyParams::new(0.5 * min_s, 0.25 * min_s, 1.0, 1.0);
            let state = StrategyState::from_series(params, &path.times, &s);
            if state.tau1.time != 1.0 {
                mislabeled += 1;
                continue;
            }
            let ledger = accumulate_wealth(&path, |k| eta_weights_at(k, &path, &state)).unwrap();
            worst = worst.max(ledger.terminal_relative().abs());
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-12 && mislabeled == 0,
        format!("{checked} untriggered paths, max |rel(T)| = {worst:.3e} (tol 1e-12), {mislabeled} unexpected triggers"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = DeltaConfig::default();
    let mut points = 0;
    let mut failures = Vec::new();
    for &a in &[0.0, 0.01, 0.1, 0.5, 1.0] {
        for &eps in &[0.05, 0.2, 0.5, 1.0, 2.0] {
            for &t in &[0.5, 1.0] {
                for &n in &[5usize, 10] {
                    points += 1;
                    let ln_n = (n as f64).ln();
                    let choice = match select_delta(a, eps, t, n, &cfg) {
                        Ok(c) => c,
                        Err(e) => {
                            failures.push(format!("A={a} eps={eps} T={t} n={n}: {e}"));
                            continue;
                        }
                    };
                    let d = choice.delta;
                    if !(a + 2.0 * d < ln_n) {
                        failures.push(format!("A+2delta = {} >= ln {n}", a + 2.0 * d));
                    }
                    if a == 0.0 {
                        let d0 = zero_floor_delta(eps, t);
                        let cap = (ln_n - a) / 2.0 * (1.0 - cfg.margin);
                        if d0 < cap && (d - d0).abs() > 1e-15 {
                            failures.push(format!("A=0: delta {d} != eps T/(6 ln 2) = {d0}"));
                        }
                        if choice.route != DeltaRoute::ZeroFloor {
                            failures.push("A=0 not routed to the zero-floor rule".into());
                        }
                    } else {
                        let bound = terminal_gain_bound(a, d, eps, t);
                        if !(bound >= choice.margin_pos && choice.margin_pos > 0.0) {
                            failures.push(format!(
                                "A={a} eps={eps} T={t} n={n}: bound {bound} < margin_pos {}",
                                choice.margin_pos
                            ));
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{points} grid points, {} violations{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = ModelSpec::volatility_stabilized(0.5, vec![1.0, 2e-5, 2e-5, 2e-5, 2e-5]).unwrap();
    let cfg = prop1_config();
    let pilot_diverse = (0..20).all(|i| {
        let p = simulate_path(&spec, 1.0, 1e-3, path_seed(SEED, SeedStream::Pilot, i)).unwrap();
        is_diverse(&p, cfg.strategy.diversity_delta, (0.0, 0.5)).unwrap()
    });
    match run_ensemble(&spec, &cfg) {
        Ok(out) => {
            let rep = &out.report;
            let (prop1, detail) = prop1_checks(&out);
            let route_ok = !rep.diversity
                && !pilot_diverse
                && rep.floor_estimated < 1e-3
                && rep.zero_floor_applied
                && rep.floor == 0.0
                && rep.delta_route == DeltaRoute::ZeroFloor;
            outcome(
                route_ok && prop1,
                format!(
                    "diverse = {}, A_estimated = {:.3e}, A used = {}, route {:?}, delta = {:.4}; {detail}",
                    rep.diversity, rep.floor_estimated, rep.floor, rep.delta_route, rep.delta
                ),
            )
        }
        Err(e) => outcome(false, format!("ensemble failed: {e}")),
    }
}

fn round_trip(path: &MarketPath) -> MarketPath {
    let mut caps = Vec::new();
    let mut cov = Vec::new();
    write_caps_csv(&mut caps, path).unwrap();
    write_covariance_csv(&mut cov, path).unwrap();
    ingest_with_covariance(caps.as_slice(), cov.as_slice()).unwrap()
}

fn criterion_8() -> Outcome {
    let spec = vsm(5, 0.5);
    let sim: Vec<MarketPath> = (0..8)
        .map(|i| simulate_path(&spec, 1.0, 1e-3, path_seed(SEED, SeedStream::Scored, i)).unwrap())
        .collect();
    let back: Vec<MarketPath> = sim.iter().map(round_trip).collect();
    let cfg = prop1_config().strategy;
    let a = evaluate_paths(&sim, &sim, &cfg, None).unwrap();
    let b = evaluate_paths(&back, &back, &cfg, None).unwrap();
    let same_caps = sim.iter().zip(&back).all(|(x, y)| x.caps == y.caps && x.sigma == y.sigma);
    let same_report = a.report == b.report;
    let same_json = to_json(&a.report).unwrap() == to_json(&b.report).unwrap();
    let same_records = a.records.iter().zip(&b.records).all(|(x, y)| x.rel == y.rel && x.entropy == y.entropy);
    outcome(
        same_caps && same_report && same_json && same_records,
        format!(
            "8 paths: caps/sigma identical {same_caps}, report identical {same_report}, json identical {same_json}, rel series identical {same_records}"
        ),
    )
}

fn main() -> ExitCode {
    // market weights of the default start, to fail fast on a broken build
    assert!(market_weights(&[1.0; 5]).is_ok());
    let criteria: [Check; 8] = [
        ("VSM excess-growth identity", criterion_1),
        ("entropy bounds and weight identities", criterion_2),
        ("master-equation consistency", criterion_3),
        ("switching strategy is a relative arbitrage", criterion_4),
        ("no-trigger identity", criterion_5),
        ("delta-selection contracts", criterion_6),
        ("non-diverse market with zero floor", criterion_7),
        ("backtest round-trip", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
