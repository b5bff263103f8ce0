//! Shared benchmark-scenario builders for the integration tests.
//!
//! The layout: `K` users evenly spread on a 20 m semicircle around the RIS,
//! which sits 700 m from the BS; 30 dBm transmit power, −104 dBm noise,
//! coherence interval of 196 symbols with `τ = K` pilot symbols; fixed LoS
//! angle table.
#![allow(dead_code)]

use ris_mimo::channel;
use ris_mimo::{AnglePair, Angles, PhaseShifts, RicianFactor, SystemConfig};

/// 30 dBm in watts.
pub const P_TX: f64 = 1.0;

/// −104 dBm in watts.
pub fn noise_power() -> f64 {
    10f64.powf(-104.0 / 10.0) * 1e-3
}

/// The fixed LoS angle table (radians): RIS departure, BS arrival, then up to
/// eight user-arrival pairs.
pub fn table_angles(users: usize) -> Angles {
    let user_table = [
        (5.20, 4.32),
        (0.41, 2.52),
        (3.84, 1.78),
        (1.35, 4.15),
        (5.08, 5.76),
        (4.75, 1.56),
        (4.74, 5.36),
        (0.09, 1.40),
    ];
    assert!(users <= user_table.len(), "angle table has 8 user entries");
    Angles {
        ris_departure: AnglePair { azimuth: 4.17, elevation: 0.09 },
        bs_arrival: AnglePair { azimuth: 6.28, elevation: 4.21 },
        user_arrival: user_table[..users]
            .iter()
            .map(|&(az, el)| AnglePair { azimuth: az, elevation: el })
            .collect(),
    }
}

/// Independent-model benchmark config: Rician factors δ=1, ε=10, τ=K,
/// τ_c=196, half-wavelength spacing on both arrays.
pub fn table_config(m: usize, n: usize, k: usize) -> SystemConfig {
    let geo = channel::scenario_geometry(k, 20.0, 700.0).expect("valid geometry");
    SystemConfig {
        m,
        n,
        k,
        p: P_TX,
        sigma2: noise_power(),
        sigma_e2: 0.0,
        tau: k,
        tau_c: 196,
        delta: RicianFactor::Finite(1.0),
        epsilon: vec![RicianFactor::Finite(10.0); k],
        alpha: geo.alpha,
        gamma: geo.gamma,
        beta: geo.beta,
        d_bs_over_lambda: 0.5,
        d_ris_over_lambda: 0.5,
        angles: table_angles(k),
        correlated: false,
    }
}

/// Correlated+EMI benchmark config: purely LoS user–RIS links (ε=∞), EMI
/// power set by the EMI-to-noise ratio `rho_db` (dB), RIS spacing
/// `d_ris_over_lambda`.
pub fn correlated_config(
    m: usize,
    n: usize,
    k: usize,
    d_ris_over_lambda: f64,
    rho_db: f64,
) -> SystemConfig {
    let mut cfg = table_config(m, n, k);
    cfg.correlated = true;
    cfg.epsilon = vec![RicianFactor::Infinite; k];
    cfg.d_ris_over_lambda = d_ris_over_lambda;
    cfg.sigma_e2 = cfg.sigma2 * 10f64.powf(rho_db / 10.0);
    cfg
}

/// Deterministic pseudo-random phase vector on [0, 2π).
pub fn random_phases(n: usize, seed: u64) -> PhaseShifts {
    ris_mimo::optimizer::random_phases(n, seed)
}
