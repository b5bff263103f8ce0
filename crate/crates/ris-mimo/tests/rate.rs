//! Closed-form rate engine tests: structural identities, specializations,
//! model-reduction checks, and quick-agreement runs against the Monte Carlo
//! oracle (full-scale oracle agreement lives in the acceptance suite).

mod common;

use approx::assert_relative_eq;
use num_complex::Complex64;
use ris_mimo::config::RicianFactor;
use ris_mimo::{montecarlo, optimizer, rate, CsiMode, PhaseShifts};

/// Two independent evaluation paths of the same inner product must agree.
const CROSS_PATH_TOL: f64 = 1e-10;
/// A phase-independent rate may vary only at round-off level across phases.
const PHASE_INDEPENDENCE_TOL: f64 = 1e-12;
/// Algebraic specializations of the same closed form.
const SPECIALIZATION_TOL: f64 = 1e-12;
/// Cross-engine reduction identity (different formula groupings).
const REDUCTION_TOL: f64 = 1e-9;
/// Loose dev-scale Monte Carlo agreement (few-thousand trials).
const QUICK_MC_REL_TOL: f64 = 0.08;

#[test]
fn beam_gain_phase_sum_matches_inner_product() {
    let cfg = common::table_config(8, 16, 3);
    for seed in 0..5u64 {
        let theta = common::random_phases(cfg.n, seed);
        for k in 0..cfg.k {
            let via_sum = rate::f_k(&theta, &cfg, k).unwrap();
            // Independent path: a_N^H Φ h̄_k from raw array responses.
            let a_n = ris_mimo::channel::ris_departure_response(&cfg).unwrap();
            let hbar = ris_mimo::channel::user_los_response(&cfg, k).unwrap();
            let via_vectors = a_n.dotc(&theta.apply(&hbar));
            assert!((via_sum - via_vectors).norm() < CROSS_PATH_TOL);
        }
    }
}

#[test]
fn beam_gain_bounds_and_alignment() {
    let cfg = common::table_config(8, 16, 1);
    let n = cfg.n as f64;
    for seed in 0..10u64 {
        let theta = common::random_phases(cfg.n, seed);
        let f = rate::f_k(&theta, &cfg, 0).unwrap();
        assert!(f.norm() <= n + 1e-9);
    }
    // Aligned phases with a common offset give f = N·e^{jC0}.
    let c0 = 0.7;
    let zeta = rate::cascade_phase_offsets(&cfg, 0).unwrap();
    let aligned = PhaseShifts::new(zeta.map(|z| -z + c0));
    let f = rate::f_k(&aligned, &cfg, 0).unwrap();
    assert!((f - Complex64::from_polar(n, c0)).norm() < 1e-9);
}

#[test]
fn single_element_ris_has_unit_beam_gain() {
    let cfg = common::table_config(4, 1, 1);
    for seed in 0..5u64 {
        let theta = common::random_phases(1, seed);
        assert_relative_eq!(rate::f_k(&theta, &cfg, 0).unwrap().norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn signal_term_is_square_of_noise_term_everywhere() {
    // Independent engine, both CSI modes, several dimensions.
    for &(m, n, k) in &[(4usize, 4usize, 1usize), (8, 16, 3), (16, 16, 4)] {
        let cfg = common::table_config(m, n, k);
        let theta = common::random_phases(n, 7);
        for csi in [CsiMode::Estimated, CsiMode::Perfect] {
            let bd = rate::rate_independent_with(&cfg, &theta, csi).unwrap();
            for u in &bd.users {
                assert_eq!(u.signal, u.noise * u.noise);
            }
        }
    }
    // Correlated engine.
    let cfg = common::correlated_config(8, 16, 3, 0.25, 30.0);
    let theta = common::random_phases(16, 11);
    let (bd, _) = rate::rate_correlated(&cfg, &theta).unwrap();
    for u in &bd.users {
        assert_eq!(u.signal, u.noise * u.noise);
    }
}

#[test]
fn rate_is_phase_independent_without_cascaded_los() {
    // Rayleigh RIS-BS hop: the rate cannot depend on the phase shifts.
    let mut cfg = common::table_config(8, 16, 3);
    cfg.delta = RicianFactor::Finite(0.0);
    let reference = rate::rate_independent(&cfg, &common::random_phases(16, 0)).unwrap();
    for seed in 1..10u64 {
        let bd = rate::rate_independent(&cfg, &common::random_phases(16, seed)).unwrap();
        for (a, b) in bd.rates().iter().zip(reference.rates()) {
            assert_relative_eq!(a, &b, max_relative = PHASE_INDEPENDENCE_TOL);
        }
    }
    // Purely scattered user-RIS links: same conclusion.
    let mut cfg = common::table_config(8, 16, 3);
    cfg.epsilon = vec![RicianFactor::Finite(0.0); 3];
    let reference = rate::rate_independent(&cfg, &common::random_phases(16, 0)).unwrap();
    for seed in 1..10u64 {
        let bd = rate::rate_independent(&cfg, &common::random_phases(16, seed)).unwrap();
        for (a, b) in bd.rates().iter().zip(reference.rates()) {
            assert_relative_eq!(a, &b, max_relative = PHASE_INDEPENDENCE_TOL);
        }
    }
}

#[test]
fn rayleigh_specialization_matches_general_engine() {
    let mut cfg = common::table_config(8, 64, 4);
    cfg.delta = RicianFactor::Finite(0.0);
    let special = rate::rate_rayleigh_risbs(&cfg).unwrap();
    let general = rate::rate_independent(&cfg, &PhaseShifts::zeros(64)).unwrap();
    for (s, g) in special.users.iter().zip(&general.users) {
        assert_relative_eq!(s.sinr, g.sinr, max_relative = SPECIALIZATION_TOL);
        assert_relative_eq!(s.rate, g.rate, max_relative = SPECIALIZATION_TOL);
    }
    // Wrong-specialization guard.
    let cfg = common::table_config(8, 64, 4);
    assert!(rate::rate_rayleigh_risbs(&cfg).is_err());
}

#[test]
fn rayleigh_large_ris_limit_is_antenna_gain_over_pathloss_share() {
    // As N grows the SINR approaches M·α_k/Σ_i α_i (equal α ⇒ M/K).
    let mut cfg = common::table_config(16, 4096, 4);
    cfg.delta = RicianFactor::Finite(0.0);
    let bd = rate::rate_rayleigh_risbs(&cfg).unwrap();
    let alpha_sum: f64 = cfg.alpha.iter().sum();
    for (k, u) in bd.users.iter().enumerate() {
        let limit = cfg.m as f64 * cfg.alpha[k] / alpha_sum;
        assert_relative_eq!(u.sinr, limit, max_relative = 0.05);
    }
    // The closed-form limit report agrees exactly with the formula.
    let report =
        rate::asymptotic_limit(&cfg, &PhaseShifts::zeros(4096), rate::ScalingLaw::LargeNRayleighRisBs)
            .unwrap();
    for (k, s) in report.sinr.iter().enumerate() {
        assert_relative_eq!(*s, cfg.m as f64 * cfg.alpha[k] / alpha_sum, epsilon = 1e-15);
    }
}

#[test]
fn correlated_engine_reduces_to_independent_los_limit() {
    // Half-wavelength spacing gives identity correlation; with EMI off the
    // correlated engine must agree with the independent engine at ε → ∞.
    let corr = common::correlated_config(8, 16, 3, 0.5, 0.0);
    let mut indep = common::table_config(8, 16, 3);
    indep.epsilon = vec![RicianFactor::Infinite; 3];
    let mut corr_no_emi = corr.clone();
    corr_no_emi.sigma_e2 = 0.0;
    for seed in 0..5u64 {
        let theta = common::random_phases(16, seed);
        let (corr_bd, _) = rate::rate_correlated(&corr_no_emi, &theta).unwrap();
        let indep_bd = rate::rate_independent(&indep, &theta).unwrap();
        for (c, i) in corr_bd.users.iter().zip(&indep_bd.users) {
            assert_relative_eq!(c.sinr, i.sinr, max_relative = REDUCTION_TOL);
        }
    }
}

#[test]
fn correlated_noise_term_closed_form_at_rayleigh_identity_case() {
    // δ=0 with identity correlation: E_noise has an explicit closed form
    // M(Nĉ+γ)²/(Nĉ+γ+σ²/(τp)+Nσ_e²β/(τp)).
    let mut cfg = common::correlated_config(8, 16, 2, 0.5, 30.0);
    cfg.delta = RicianFactor::Finite(0.0);
    let theta = common::random_phases(16, 3);
    let (bd, _) = rate::rate_correlated(&cfg, &theta).unwrap();
    let sn = cfg.sigma2 / (cfg.tau as f64 * cfg.p);
    for (k, u) in bd.users.iter().enumerate() {
        let chat = cfg.beta * cfg.alpha[k];
        let nf = cfg.n as f64;
        let cov = nf * chat + cfg.gamma[k];
        let emi = nf * cfg.sigma_e2 * cfg.beta / (cfg.tau as f64 * cfg.p);
        let expected = cfg.m as f64 * cov * cov / (cov + sn + emi);
        assert_relative_eq!(u.noise, expected, max_relative = 1e-9);
    }
}

#[test]
fn single_user_snr_coefficients_reproduce_the_engine() {
    let cfg = common::table_config(8, 16, 1);
    let coeffs = rate::single_user_snr_coeffs(&cfg).unwrap();
    assert!(coeffs.s1 > 0.0 && coeffs.s2 > 0.0 && coeffs.t1 > 0.0 && coeffs.t2 > 0.0);

    // Aligned phases realize x = N².
    let aligned = optimizer::align_phases(&cfg, 0).unwrap();
    let bd = rate::rate_independent(&cfg, &aligned).unwrap();
    let n2 = (cfg.n as f64).powi(2);
    assert_relative_eq!(coeffs.snr(n2), bd.users[0].sinr, max_relative = 1e-10);

    // Cancelling phases realize x = 0.
    let cancel = optimizer::cancel_phases(&cfg, 0).unwrap();
    let bd0 = rate::rate_independent(&cfg, &cancel).unwrap();
    assert_relative_eq!(coeffs.snr(0.0), bd0.users[0].sinr, max_relative = 1e-10);

    // Arbitrary phases land on the same rational function of x = |f|².
    for seed in 0..5u64 {
        let theta = common::random_phases(cfg.n, seed);
        let x = rate::f_k(&theta, &cfg, 0).unwrap().norm_sqr();
        let bd = rate::rate_independent(&cfg, &theta).unwrap();
        assert_relative_eq!(coeffs.snr(x), bd.users[0].sinr, max_relative = 1e-10);
    }

    // Multi-user configs are rejected.
    assert!(rate::single_user_snr_coeffs(&common::table_config(8, 16, 2)).is_err());
}

#[test]
fn single_user_massive_scaling_limits_match_formulas() {
    let cfg = common::table_config(16, 64, 1);
    let theta = PhaseShifts::zeros(64);
    let e_u = 1.0;
    let (delta, eps) = (1.0, 10.0);
    let c = cfg.beta * cfg.alpha[0] / ((delta + 1.0) * (eps + 1.0));

    // p = E_u/(MN²): SNR → (E_u/σ²)·c·δ·ε.
    let r1 = rate::asymptotic_limit(&cfg, &theta, rate::ScalingLaw::SingleUserPowerOverMNSquared { e_u })
        .unwrap();
    assert_relative_eq!(r1.sinr[0], e_u / cfg.sigma2 * c * delta * eps, max_relative = 1e-12);

    // p = E_u/N²: SNR → (E_u/σ²)·M·c·δ·ε.
    let r2 = rate::asymptotic_limit(&cfg, &theta, rate::ScalingLaw::SingleUserPowerOverNSquared { e_u })
        .unwrap();
    assert_relative_eq!(
        r2.sinr[0],
        e_u / cfg.sigma2 * cfg.m as f64 * c * delta * eps,
        max_relative = 1e-12
    );
}

#[test]
fn equal_pathloss_rayleigh_scaling_gives_equal_user_rates() {
    // p = E_u/N with a Rayleigh RIS-BS hop: equal α implies equal limits.
    let mut cfg = common::table_config(16, 64, 4);
    cfg.delta = RicianFactor::Finite(0.0);
    let report = rate::asymptotic_limit(
        &cfg,
        &PhaseShifts::zeros(64),
        rate::ScalingLaw::PowerOverNRayleighRisBs { e_u: 1.0 },
    )
    .unwrap();
    for pair in report.rate.windows(2) {
        assert_relative_eq!(pair[0], pair[1], max_relative = 1e-12);
    }
}

#[test]
fn user_permutation_permutes_rates() {
    let cfg = common::table_config(8, 16, 3);
    let theta = common::random_phases(16, 5);
    let base = rate::rate_independent(&cfg, &theta).unwrap();

    let mut swapped = cfg.clone();
    swapped.alpha.swap(0, 2);
    swapped.gamma.swap(0, 2);
    swapped.epsilon.swap(0, 2);
    swapped.angles.user_arrival.swap(0, 2);
    let perm = rate::rate_independent(&swapped, &theta).unwrap();
    assert_relative_eq!(base.users[0].sinr, perm.users[2].sinr, max_relative = 1e-12);
    assert_relative_eq!(base.users[2].sinr, perm.users[0].sinr, max_relative = 1e-12);
    assert_relative_eq!(base.users[1].sinr, perm.users[1].sinr, max_relative = 1e-12);
}

#[test]
fn quick_monte_carlo_agreement_independent() {
    let cfg = common::table_config(8, 16, 2);
    let theta = common::random_phases(16, 42);
    let closed = rate::rate_independent(&cfg, &theta).unwrap();
    let mc = montecarlo::uatf_sinr_mc(&cfg, &theta, 6_000, 4242).unwrap();
    for (u, est) in closed.users.iter().zip(&mc) {
        assert_relative_eq!(u.sinr, est.mean, max_relative = QUICK_MC_REL_TOL);
    }
}

#[test]
fn quick_monte_carlo_agreement_correlated() {
    let cfg = common::correlated_config(8, 16, 2, 0.25, 30.0);
    let theta = common::random_phases(16, 42);
    let (closed, _) = rate::rate_correlated(&cfg, &theta).unwrap();
    let mc = montecarlo::uatf_sinr_mc(&cfg, &theta, 6_000, 2424).unwrap();
    for (u, est) in closed.users.iter().zip(&mc) {
        assert_relative_eq!(u.sinr, est.mean, max_relative = QUICK_MC_REL_TOL);
    }
}
