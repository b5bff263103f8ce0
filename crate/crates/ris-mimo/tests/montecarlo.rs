//! Monte Carlo oracle tests: determinism, CLT scaling, degenerate
//! zero-variance cases, the moment-identity suite, and closed-form agreement.

mod common;

use approx::assert_relative_eq;
use ris_mimo::config::RicianFactor;
use ris_mimo::{montecarlo, optimizer, rate, PhaseShifts};

#[test]
fn reports_are_bitwise_reproducible() {
    let cfg = common::table_config(4, 16, 2);
    let theta = common::random_phases(16, 1);
    let a = montecarlo::rate_mc_report(&cfg, &theta, 2000, 7).unwrap();
    let b = montecarlo::rate_mc_report(&cfg, &theta, 2000, 7).unwrap();
    assert_eq!(a, b);
    let c = montecarlo::rate_mc_report(&cfg, &theta, 2000, 8).unwrap();
    assert_ne!(a[0].rate.to_bits(), c[0].rate.to_bits());
}

#[test]
fn stderr_shrinks_with_clt_rate() {
    let cfg = common::table_config(4, 16, 2);
    let theta = common::random_phases(16, 2);
    let small = montecarlo::rate_mc_report(&cfg, &theta, 4000, 11).unwrap();
    let large = montecarlo::rate_mc_report(&cfg, &theta, 8000, 11).unwrap();
    for (s, l) in small.iter().zip(&large) {
        let ratio = s.stderr / l.stderr;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2,
            "stderr ratio {ratio}"
        );
    }
}

#[test]
fn insufficient_trials_are_rejected() {
    let cfg = common::table_config(4, 16, 1);
    assert!(montecarlo::uatf_sinr_mc(&cfg, &PhaseShifts::zeros(16), 10, 1).is_err());
}

#[test]
fn deterministic_channel_has_no_sampling_variance() {
    // Purely LoS hops, no direct path, noiseless pilots: every sampled term
    // is a constant, the leakage vanishes, and the SINR is exactly
    // p·E_signal/(σ²·E_noise).
    let mut cfg = common::table_config(4, 16, 1);
    cfg.delta = RicianFactor::Infinite;
    cfg.epsilon = vec![RicianFactor::Infinite];
    cfg.gamma = vec![0.0];
    let theta = common::random_phases(16, 3);
    let est = montecarlo::uatf_sinr_mc(&cfg, &theta, 1000, 5).unwrap();
    assert_relative_eq!(est[0].stderr, 0.0, epsilon = 1e-9 * est[0].mean);
    // Closed form for the deterministic rank-one channel: q = √(βα)·a_M·f
    // with f = a_N^HΦh̄; perfect estimate ⇒ SINR = p‖q‖⁴/(σ²‖q‖²) = p‖q‖²/σ².
    let f2 = rate::f_k(&theta, &cfg, 0).unwrap().norm_sqr();
    let expected = cfg.p * cfg.beta * cfg.alpha[0] * cfg.m as f64 * f2 / cfg.sigma2;
    assert_relative_eq!(est[0].mean, expected, max_relative = 1e-9);
}

#[test]
fn moment_identity_suite_passes() {
    let cfg = common::table_config(8, 16, 1);
    let report = montecarlo::moment_identity_suite(&cfg, 20_000, 13).unwrap();
    for c in &report.checks {
        assert!(c.pass, "{}: dev {} > tol {}", c.name, c.deviation, c.tolerance);
    }
    assert!(report.all_pass());
    // Fourth-moment identity at M=8: E{‖u‖⁴} = 72, within 3%.
    let fourth = report
        .checks
        .iter()
        .find(|c| c.name.contains("|u|^4"))
        .unwrap();
    assert!(fourth.rel_error < 0.03, "rel error {}", fourth.rel_error);
    assert!(montecarlo::moment_identity_suite(&cfg, 100, 13).is_err());
}

#[test]
fn single_user_rate_ci_contains_closed_form() {
    let cfg = common::table_config(16, 16, 1);
    let design = optimizer::single_user_design(&cfg).unwrap();
    let theta = design.phase;
    let closed = rate::rate_independent(&cfg, &theta).unwrap().users[0].rate;
    let report = montecarlo::rate_mc_report(&cfg, &theta, 10_000, 17).unwrap();
    assert!(
        report[0].ci95_low <= closed && closed <= report[0].ci95_high,
        "closed {} outside [{}, {}]",
        closed,
        report[0].ci95_low,
        report[0].ci95_high
    );
}

#[test]
fn correlated_rate_ci_contains_closed_form() {
    let cfg = common::correlated_config(8, 16, 2, 0.25, 30.0);
    let theta = common::random_phases(16, 4);
    let (closed, _) = rate::rate_correlated(&cfg, &theta).unwrap();
    let report = montecarlo::rate_mc_report(&cfg, &theta, 10_000, 19).unwrap();
    for k in 0..cfg.k {
        let gap = (report[k].rate - closed.users[k].rate).abs();
        assert!(
            gap < (3.0 * report[k].stderr).max(0.04 * closed.users[k].rate),
            "user {k}: gap {gap}, stderr {}",
            report[k].stderr
        );
    }
}

#[test]
fn mc_tracks_closed_form_as_trials_grow() {
    // The SINR gap falls within 3 stderr at every trial budget.
    let cfg = common::table_config(8, 16, 2);
    let theta = common::random_phases(16, 5);
    let closed = rate::rate_independent(&cfg, &theta).unwrap();
    for trials in [1000usize, 10_000, 20_000] {
        let est = montecarlo::uatf_sinr_mc(&cfg, &theta, trials, 23).unwrap();
        for k in 0..cfg.k {
            let gap = (est[k].mean - closed.users[k].sinr).abs();
            assert!(
                gap < (3.0 * est[k].stderr).max(0.05 * closed.users[k].sinr),
                "trials {trials}, user {k}: gap {gap} vs stderr {}",
                est[k].stderr
            );
        }
    }
}
