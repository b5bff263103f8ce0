//! Closed-form use-and-then-forget (UatF) achievable-rate engines.
//!
//! Three engines share one SINR template
//! `SINR_k = p·E_signal / (p·E_leak + p·Σ_{i≠k} I_ki + σ_e²·E_emi + σ²·E_noise)`
//! with `E_signal = E_noise²`:
//!
//! * [`rate_independent`] — general Rician fading, spatially independent
//!   scattering, LMMSE-estimated CSI (with a perfect-CSI switch);
//! * [`rate_rayleigh_risbs`] — the Rayleigh RIS–BS specialization, which is
//!   phase-independent and admits simpler estimation-quality coefficients;
//! * [`rate_correlated`] — spatially correlated scattering with
//!   electromagnetic interference (EMI), exposing every one of the 8+8+8
//!   component terms for unit testing.
//!
//! Infinite Rician factors are handled symbolically: every formula is
//! assembled from monomials in the four finite cascaded-power atoms of
//! [`CascadedPower`], so the `κ → ∞` limits are exact rather than numerical.
//! Term grouping deliberately mirrors the printed closed forms term by term
//! so each summand can be tested in isolation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{self, ChannelError};
use crate::config::{CascadedPower, CsiMode, PhaseShifts, SystemConfig};
use crate::estimation::{self, hadamard_sandwich, EstimationError, UpsilonUser};

/// Errors from the rate engines.
#[derive(Debug, Error)]
pub enum RateError {
    #[error("wrong specialization: this engine requires {expected}")]
    WrongSpecialization { expected: &'static str },
    #[error("unsupported model: {reason}")]
    UnsupportedModel { reason: &'static str },
    #[error("wrong user cardinality: expected {expected}, got {got}")]
    WrongCardinality { expected: usize, got: usize },
    #[error("scaling schedule precondition violated: {reason}")]
    ScheduleMismatch { reason: &'static str },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// One user's rate decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRate {
    /// Coherent desired-signal power factor (`= noise²`).
    pub signal: f64,
    /// Self-leakage (signal-power uncertainty) factor.
    pub leak: f64,
    /// Interference factor from each other user (entry at own index is 0).
    pub interference: Vec<f64>,
    /// EMI factor (correlated model only).
    pub emi: Option<f64>,
    /// Effective-noise factor.
    pub noise: f64,
    /// Assembled effective SINR.
    pub sinr: f64,
    /// Achievable rate `prelog · log2(1 + SINR)` in bits/s/Hz.
    pub rate: f64,
}

/// Per-user closed-form rate terms plus the shared prelog.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBreakdown {
    /// Payload fraction `(τ_c − τ)/τ_c` of the coherence interval.
    pub prelog: f64,
    pub users: Vec<UserRate>,
}

impl RateBreakdown {
    /// Smallest per-user rate.
    pub fn min_rate(&self) -> f64 {
        self.users.iter().map(|u| u.rate).fold(f64::INFINITY, f64::min)
    }

    /// All per-user rates.
    pub fn rates(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.rate).collect()
    }
}

fn assemble_user(
    config_p: f64,
    sigma2: f64,
    sigma_e2: f64,
    prelog: f64,
    signal: f64,
    leak: f64,
    interference: Vec<f64>,
    emi: Option<f64>,
    noise: f64,
) -> UserRate {
    let inter_sum: f64 = interference.iter().sum();
    let den = config_p * leak
        + config_p * inter_sum
        + sigma_e2 * emi.unwrap_or(0.0)
        + sigma2 * noise;
    let sinr = if den > 0.0 { config_p * signal / den } else { 0.0 };
    UserRate { signal, leak, interference, emi, noise, sinr, rate: prelog * (1.0 + sinr).log2() }
}

// ---------------------------------------------------------------------------
// LoS beamforming gain f_k(Φ)
// ---------------------------------------------------------------------------

/// Per-element phase offsets `ζ_n` of user `k`'s cascaded LoS path, so that
/// `f_k(Φ) = Σ_n e^{j(ζ_n + θ_n)}`.
pub fn cascade_phase_offsets(config: &SystemConfig, k: usize) -> Result<DVector<f64>, RateError> {
    if k >= config.k {
        return Err(RateError::WrongCardinality { expected: config.k, got: k });
    }
    let side = config.ris_side();
    if side * side != config.n {
        return Err(ChannelError::NotPerfectSquare { size: config.n }.into());
    }
    let t = config.angles.ris_departure;
    let u = config.angles.user_arrival[k];
    let row_rate = u.elevation.sin() * u.azimuth.sin() - t.elevation.sin() * t.azimuth.sin();
    let col_rate = u.elevation.cos() - t.elevation.cos();
    let two_pi_d = 2.0 * std::f64::consts::PI * config.d_ris_over_lambda;
    Ok(DVector::from_iterator(
        config.n,
        (0..config.n).map(|n| {
            two_pi_d * ((n / side) as f64 * row_rate + (n % side) as f64 * col_rate)
        }),
    ))
}

/// Cascaded LoS array gain `f_k(Φ) = a_N^H Φ h̄_k`, evaluated through the
/// equivalent per-element phase-sum form. Always satisfies `|f_k| ≤ N`.
pub fn f_k(phase: &PhaseShifts, config: &SystemConfig, k: usize) -> Result<Complex64, RateError> {
    let zeta = cascade_phase_offsets(config, k)?;
    Ok(zeta
        .iter()
        .zip(phase.theta().iter())
        .map(|(&z, &t)| Complex64::from_polar(1.0, z + t))
        .sum())
}

// ---------------------------------------------------------------------------
// Independent-model engine
// ---------------------------------------------------------------------------

/// Precomputed per-scenario quantities for the independent-model closed form
/// and its gradient: cascaded power atoms, estimation-quality coefficients,
/// LoS array gains and LoS inner products.
#[derive(Debug, Clone)]
pub(crate) struct IndepCtx {
    pub m: f64,
    pub nf: f64,
    pub p: f64,
    pub sigma2: f64,
    /// Pilot-noise power `σ²/(τp)`; zero in perfect-CSI mode.
    pub noise: f64,
    pub prelog: f64,
    pub k: usize,
    pub pw: Vec<CascadedPower>,
    pub gamma: Vec<f64>,
    /// `(e₁, e₂, e₃)` per user; all ones in perfect-CSI mode.
    pub e: Vec<(f64, f64, f64)>,
    /// LoS array gains `f_k(Φ)`.
    pub f: Vec<Complex64>,
    /// LoS inner products `h̄_k^H h̄_i`, indexed `[k][i]`.
    pub hinner: Vec<Vec<Complex64>>,
}

impl IndepCtx {
    pub fn new(config: &SystemConfig, phase: &PhaseShifts, csi: CsiMode) -> Result<Self, RateError> {
        if config.correlated {
            return Err(RateError::UnsupportedModel {
                reason: "independent engine called with the correlated model selected",
            });
        }
        let hbar: Vec<_> = (0..config.k)
            .map(|k| channel::user_los_response(config, k))
            .collect::<Result<_, _>>()?;
        let hinner: Vec<Vec<Complex64>> = (0..config.k)
            .map(|k| (0..config.k).map(|i| hbar[k].dotc(&hbar[i])).collect())
            .collect();
        let f: Vec<Complex64> = (0..config.k)
            .map(|k| f_k(phase, config, k))
            .collect::<Result<_, _>>()?;
        let (noise, e) = match csi {
            CsiMode::Perfect => (0.0, vec![(1.0, 1.0, 1.0); config.k]),
            CsiMode::Estimated => {
                let e = (0..config.k)
                    .map(|k| {
                        let s = estimation::lmmse_scalars(config, k);
                        (s.e1, s.e2, s.e3)
                    })
                    .collect();
                (config.pilot_noise_power(), e)
            }
        };
        Ok(IndepCtx {
            m: config.m as f64,
            nf: config.n as f64,
            p: config.p,
            sigma2: config.sigma2,
            noise,
            prelog: config.prelog(),
            k: config.k,
            pw: (0..config.k).map(|k| config.cascaded_power(k)).collect(),
            gamma: config.gamma.clone(),
            e,
            f,
            hinner,
        })
    }

    /// Effective-noise factor of user `k` as a function of `x = |f_k|²`.
    pub fn noise_term(&self, k: usize, x: f64) -> f64 {
        let a = self.pw[k];
        let (e1, e2, _) = self.e[k];
        self.m
            * (x * a.los_los
                + self.nf * a.los_nlos * e2
                + (self.nf * a.nlos_ris_bs() + self.gamma[k]) * e1)
    }

    /// Self-leakage factor of user `k` as a function of `x = |f_k|²`,
    /// accumulated in the printed seven-term order.
    pub fn leak_term(&self, k: usize, x: f64) -> f64 {
        let a = self.pw[k];
        let (e1, e2, e3) = self.e[k];
        let (m, n, g, sn) = (self.m, self.nf, self.gamma[k], self.noise);
        let t1 = m * x
            * (n * (e2 * e2 + 1.0) * (m * a.los_nlos * a.los_los
                + a.nlos_los * a.los_los
                + a.nlos_nlos * a.los_los)
                + 2.0 * a.nlos_nlos * a.los_los * (m * e1 + e2) * (e2 + 1.0));
        let t2 = m * x * a.los_los * (g + (g + sn) * e2 * e2);
        let t3 = m * m * n * n * a.los_nlos * a.los_nlos * e2 * e2;
        let t4 = m * n * n
            * (2.0 * a.los_nlos * a.nlos_ris_bs() * e2 * e2
                + a.nlos_ris_bs() * a.nlos_ris_bs() * e3);
        let t5 = m * m * n
            * (a.nlos_nlos * (2.0 * a.nlos_los + a.nlos_nlos) * e1 * e1
                + 2.0 * a.nlos_nlos * a.los_nlos * e1 * e2);
        let t6 = m * n
            * (2.0 * a.nlos_nlos * a.los_nlos * e2 * e2
                + a.nlos_nlos * (2.0 * a.nlos_los + a.nlos_nlos) * e3
                + (2.0 * g + sn) * (a.los_nlos * e2 * e2 + a.nlos_ris_bs() * e3));
        let t7 = m * g * (g + sn) * e3;
        t1 + t2 + t3 + t4 + t5 + t6 + t7
    }

    /// Interference factor caused at user `k` by user `i`, in the printed
    /// nine-term order. `x`/`y` override `|f_k|²`/`|f_i|²`; `fkfi` is
    /// `f_k^H f_i`.
    pub fn cross_term(&self, k: usize, i: usize, x: f64, y: f64, fkfi: Complex64) -> f64 {
        let a = self.pw[k];
        let b = self.pw[i];
        let (e1, e2, e3) = self.e[k];
        let (m, n, sn) = (self.m, self.nf, self.noise);
        let (gk, gi) = (self.gamma[k], self.gamma[i]);
        let hki = self.hinner[k][i];
        let t1 = m * m * x * y * a.los_los * b.los_los;
        let t2 = m * x
            * (m * n * a.los_los * b.los_nlos
                + n * a.los_los * b.nlos_los
                + n * a.los_los * b.nlos_nlos
                + 2.0 * m * e1 * a.los_los * b.nlos_nlos
                + gi * a.los_los);
        let t3 = m * y
            * (b.los_los
                * (m * n * a.los_nlos * e2 * e2
                    + n * a.nlos_los * e2 * e2
                    + n * a.nlos_nlos * e2 * e2
                    + 2.0 * m * a.nlos_nlos * e1 * e2)
                + b.los_los * (gk + sn) * e2 * e2);
        let t4 = m * m * n * n * a.los_nlos * b.los_nlos * e2 * e2;
        let t5 = m * n * n
            * (e2 * e2
                * (a.los_los * b.nlos_nlos
                    + a.los_nlos * b.nlos_los
                    + a.los_nlos * b.nlos_nlos
                    + a.nlos_nlos * b.los_nlos)
                + e3 * a.nlos_ris_bs() * b.nlos_ris_bs());
        let t6 = m * m * n * e1
            * (e1
                * (a.nlos_los * b.nlos_nlos
                    + a.nlos_nlos * b.nlos_los
                    + a.nlos_nlos * b.nlos_nlos)
                + e2 * (a.los_nlos * b.nlos_nlos + a.nlos_nlos * b.los_nlos));
        let t7 = m * m * e1
            * (a.nlos_los * b.nlos_los * e1 * hki.norm_sqr()
                + 2.0 * a.los_los * b.nlos_los * (fkfi * hki.conj()).re);
        let t8 = m * n
            * ((gk + sn) * (b.los_nlos * e2 * e2 + b.nlos_ris_bs() * e3)
                + gi * (a.los_nlos * e2 * e2 + a.nlos_ris_bs() * e3));
        let t9 = m * gi * (gk + sn) * e3;
        t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8 + t9
    }
}

/// Independent-model closed-form rate with selectable CSI quality.
pub fn rate_independent_with(
    config: &SystemConfig,
    phase: &PhaseShifts,
    csi: CsiMode,
) -> Result<RateBreakdown, RateError> {
    let ctx = IndepCtx::new(config, phase, csi)?;
    let users = (0..ctx.k)
        .map(|k| {
            let x = ctx.f[k].norm_sqr();
            let noise = ctx.noise_term(k, x);
            let leak = ctx.leak_term(k, x);
            let interference: Vec<f64> = (0..ctx.k)
                .map(|i| {
                    if i == k {
                        0.0
                    } else {
                        ctx.cross_term(k, i, x, ctx.f[i].norm_sqr(), ctx.f[k].conj() * ctx.f[i])
                    }
                })
                .collect();
            assemble_user(
                ctx.p,
                ctx.sigma2,
                0.0,
                ctx.prelog,
                noise * noise,
                leak,
                interference,
                None,
                noise,
            )
        })
        .collect();
    Ok(RateBreakdown { prelog: ctx.prelog, users })
}

/// Independent-model closed-form rate under LMMSE-estimated CSI.
pub fn rate_independent(config: &SystemConfig, phase: &PhaseShifts) -> Result<RateBreakdown, RateError> {
    rate_independent_with(config, phase, CsiMode::Estimated)
}

/// Rayleigh RIS–BS specialization: the rate is independent of the phase
/// shifts and uses the simplified estimation coefficients `e₃ = e₁²`.
pub fn rate_rayleigh_risbs(config: &SystemConfig) -> Result<RateBreakdown, RateError> {
    if config.delta != crate::config::RicianFactor::Finite(0.0) {
        return Err(RateError::WrongSpecialization {
            expected: "a Rayleigh RIS-BS link (delta = 0)",
        });
    }
    let hbar: Vec<_> = (0..config.k)
        .map(|k| channel::user_los_response(config, k))
        .collect::<Result<Vec<_>, _>>()?;
    let (m, n, sn) = (config.m as f64, config.n as f64, config.pilot_noise_power());
    let prelog = config.prelog();
    let users = (0..config.k)
        .map(|k| {
            let a = config.cascaded_power(k);
            let g = config.gamma[k];
            // Total scattered cascade power c(ε+1) and the quality factor e₁.
            let ck_tot = a.nlos_ris_bs();
            let cov = n * ck_tot + g;
            let e1 = if cov + sn > 0.0 { cov / (cov + sn) } else { 0.0 };
            let noise = cov;
            let signal = m * cov * cov * e1;
            let leak = (n * n * ck_tot * ck_tot
                + m * n * a.nlos_nlos * (2.0 * a.nlos_los + a.nlos_nlos)
                + n * (a.nlos_nlos * (2.0 * a.nlos_los + a.nlos_nlos) + (2.0 * g + sn) * ck_tot)
                + g * (g + sn))
                * e1;
            let interference: Vec<f64> = (0..config.k)
                .map(|i| {
                    if i == k {
                        return 0.0;
                    }
                    let b = config.cascaded_power(i);
                    let gi = config.gamma[i];
                    let ci_tot = b.nlos_ris_bs();
                    let hki2 = hbar[k].dotc(&hbar[i]).norm_sqr();
                    (n * n * ck_tot * ci_tot
                        + m * n
                            * (a.nlos_los * b.nlos_nlos
                                + a.nlos_nlos * b.nlos_los
                                + a.nlos_nlos * b.nlos_nlos)
                        + m * a.nlos_los * b.nlos_los * hki2
                        + n * ((g + sn) * ci_tot + gi * ck_tot)
                        + gi * (g + sn))
                        * e1
                })
                .collect();
            assemble_user(config.p, config.sigma2, 0.0, prelog, signal, leak, interference, None, noise)
        })
        .collect();
    Ok(RateBreakdown { prelog, users })
}

// ---------------------------------------------------------------------------
// Correlated-model engine
// ---------------------------------------------------------------------------

/// The individually exposed building blocks of one user's correlated-model
/// rate, following the engine's notation block: `f1` is shared; `f2..f7` are
/// per-user scalars; `f8`/`f9` are per-interferer.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedRateTerms {
    /// `Tr{R_ris Φ R_emi Φ^H}` — total EMI-correlation coupling.
    pub f1: f64,
    /// `h̄^H Φ^H R_ris Φ h̄` — user LoS power through the correlation.
    pub f2: f64,
    /// `Tr{Υ² H̄₂ Φ R_emi Φ^H H̄₂^H}` — EMI power through the estimator.
    pub f3: f64,
    /// `Tr{Υ²}`.
    pub f4: f64,
    /// `|Tr{Υ}|²`.
    pub f5: f64,
    /// `h̄^H Φ^H R_ris Φ R_emi Φ^H R_ris Φ h̄`.
    pub f6: f64,
    /// `|f_k(Φ)|²`.
    pub f7: f64,
    /// `h̄_i^H Φ^H H̄₂^H Υ² H̄₂ Φ h̄_i` for each `i`.
    pub f8: Vec<f64>,
    /// `h̄_i^H Φ^H H̄₂^H Υ H̄₂ Φ R_emi Φ^H H̄₂^H Υ^H H̄₂ Φ h̄_i` for each `i`.
    pub f9: Vec<f64>,
    /// The eight EMI components (before the common `β/(δ+1)` prefactor).
    pub emi_components: [f64; 8],
    /// The eight self-leakage components.
    pub leak_components: [f64; 8],
    /// The eight interference components per user `i` (all-zero at `i = k`).
    pub interference_components: Vec<[f64; 8]>,
}

/// Precomputed quantities shared by the correlated rate engine and its
/// gradient: estimator matrices, LoS blocks, correlation matrices, and every
/// scalar invariant of the current phase vector.
#[derive(Debug, Clone)]
pub(crate) struct CorrContext {
    pub m: f64,
    pub p: f64,
    pub sigma2: f64,
    pub sigma_e2: f64,
    pub prelog: f64,
    pub k: usize,
    pub delta: f64,
    pub noise: f64,
    /// `σ_e²β/(τp(δ+1))` — pilot-EMI strength per unit correlation.
    pub emi_gain: f64,
    /// `β/(δ+1)` — common prefactor of the EMI power at the data stage.
    pub beta_nlos: f64,
    pub gamma: Vec<f64>,
    pub chat: Vec<f64>,
    pub a_m: DVector<Complex64>,
    pub a_n: DVector<Complex64>,
    pub hbar: Vec<DVector<Complex64>>,
    pub r_ris: DMatrix<Complex64>,
    pub r_emi: DMatrix<Complex64>,
    pub ups: Vec<UpsilonUser>,
    // Phase-dependent derived quantities.
    /// `Φ h̄_k` per user.
    pub phik: Vec<DVector<Complex64>>,
    /// `Φ R_emi Φ^H`.
    pub phi_remi: DMatrix<Complex64>,
    /// `a_N^H Φ R_emi Φ^H a_N` — EMI power along the RIS–BS LoS direction.
    pub emi_los: f64,
    pub f_c1: f64,
    pub f: Vec<Complex64>,
    /// `a_M^H Υ_k a_M` per user.
    pub t1: Vec<f64>,
    /// `a_M^H Υ_k² a_M` per user.
    pub t2: Vec<f64>,
    /// `Tr{Υ_k}` per user.
    pub tr_u: Vec<f64>,
    /// `Tr{Υ_k²}` per user.
    pub tr_u2: Vec<f64>,
}

impl CorrContext {
    pub fn new(config: &SystemConfig, phase: &PhaseShifts) -> Result<Self, RateError> {
        if !config.correlated {
            return Err(RateError::UnsupportedModel {
                reason: "correlated engine called with the independent model selected",
            });
        }
        for e in &config.epsilon {
            if e.is_finite() {
                return Err(RateError::UnsupportedModel {
                    reason: "the correlated engine requires purely LoS user-RIS links",
                });
            }
        }
        let delta = config.delta.finite().ok_or(RateError::UnsupportedModel {
            reason: "the correlated engine requires a finite RIS-BS Rician factor",
        })?;
        let corr = channel::sinc_correlation(config.n, config.d_ris_over_lambda)?;
        let r_ris = corr.r_ris.map(|x| Complex64::new(x, 0.0));
        let r_emi = corr.r_emi.map(|x| Complex64::new(x, 0.0));
        let a_m = channel::bs_los_response(config)?;
        let a_n = channel::ris_departure_response(config)?;
        let hbar: Vec<_> = (0..config.k)
            .map(|k| channel::user_los_response(config, k))
            .collect::<Result<Vec<_>, _>>()?;
        let ups_model = estimation::upsilon_model(config, phase)?;

        let phik: Vec<_> = (0..config.k).map(|k| phase.apply(&hbar[k])).collect();
        let phi_remi = hadamard_sandwich(&r_emi, phase);
        let emi_los = (a_n.adjoint() * &phi_remi * &a_n)[(0, 0)].re;
        let f_c1 = (&r_ris * &phi_remi).trace().re;
        let f: Vec<Complex64> = (0..config.k).map(|k| a_n.dotc(&phik[k])).collect();
        let t1: Vec<f64> = ups_model
            .users
            .iter()
            .map(|u| (a_m.adjoint() * &u.upsilon * &a_m)[(0, 0)].re)
            .collect();
        let t2: Vec<f64> = ups_model
            .users
            .iter()
            .map(|u| (&u.upsilon * &a_m).norm_squared())
            .collect();
        let tr_u: Vec<f64> = ups_model.users.iter().map(|u| u.upsilon.trace().re).collect();
        let tr_u2: Vec<f64> = ups_model
            .users
            .iter()
            .map(|u| u.upsilon.norm_squared())
            .collect();

        Ok(CorrContext {
            m: config.m as f64,
            p: config.p,
            sigma2: config.sigma2,
            sigma_e2: config.sigma_e2,
            prelog: config.prelog(),
            k: config.k,
            delta,
            noise: config.pilot_noise_power(),
            emi_gain: config.sigma_e2 * config.beta
                / (config.tau as f64 * config.p * (delta + 1.0)),
            beta_nlos: config.beta / (delta + 1.0),
            gamma: config.gamma.clone(),
            chat: (0..config.k).map(|k| config.cascaded_nlos_ris_bs(k)).collect(),
            a_m,
            a_n,
            hbar,
            r_ris,
            r_emi,
            ups: ups_model.users,
            phik,
            phi_remi,
            emi_los,
            f_c1,
            f,
            t1,
            t2,
            tr_u,
            tr_u2,
        })
    }

    /// Effective-noise factor of user `k`.
    pub fn noise_term(&self, k: usize) -> f64 {
        let f2 = self.f2(k);
        self.m * self.chat[k] * self.delta * self.f[k].norm_sqr()
            + self.chat[k] * self.tr_u[k] * f2
            + self.gamma[k] * self.tr_u[k]
    }

    /// `f2 = h̄_k^H Φ^H R_ris Φ h̄_k`.
    pub fn f2(&self, k: usize) -> f64 {
        (self.phik[k].adjoint() * &self.r_ris * &self.phik[k])[(0, 0)].re
    }

    /// `f3 = Tr{Υ_k² H̄₂ Φ R_emi Φ^H H̄₂^H} = emi_los · a^H Υ² a`.
    pub fn f3(&self, k: usize) -> f64 {
        self.emi_los * self.t2[k]
    }

    /// `f6 = h̄^H Φ^H R_ris Φ R_emi Φ^H R_ris Φ h̄`.
    pub fn f6(&self, k: usize) -> f64 {
        let v = &self.r_ris * &self.phik[k];
        (v.adjoint() * &self.phi_remi * &v)[(0, 0)].re
    }

    /// `f8_{ki} = |f_i|² · a^H Υ_k² a`.
    pub fn f8(&self, k: usize, i: usize) -> f64 {
        self.f[i].norm_sqr() * self.t2[k]
    }

    /// `f9_{ki} = |f_i|² · emi_los · (a^H Υ_k a)²`.
    pub fn f9(&self, k: usize, i: usize) -> f64 {
        self.f[i].norm_sqr() * self.emi_los * self.t1[k] * self.t1[k]
    }

    /// `a_N^H (Φ R_emi Φ^H) (R_ris Φ h̄_k)` — shared by an EMI and a leak term.
    pub fn emi_ris_cross(&self, k: usize) -> Complex64 {
        let v = &self.r_ris * &self.phik[k];
        (self.a_n.adjoint() * &self.phi_remi * v)[(0, 0)]
    }

    /// `x^H R_ris x` with `x = Φ R_emi Φ^H a_N` — the doubly-reflected EMI
    /// coupling of the sixth EMI component.
    pub fn double_emi_coupling(&self) -> f64 {
        let x = &self.phi_remi * &self.a_n;
        (x.adjoint() * &self.r_ris * &x)[(0, 0)].re
    }

    /// `Tr{(R_ris Φ R_emi Φ^H)²}`.
    pub fn ris_emi_square_trace(&self) -> f64 {
        let a = &self.r_ris * &self.phi_remi;
        (&a * &a).trace().re
    }
}

/// Correlated-model closed-form rate with every component term exposed.
pub fn rate_correlated(
    config: &SystemConfig,
    phase: &PhaseShifts,
) -> Result<(RateBreakdown, Vec<CorrelatedRateTerms>), RateError> {
    let ctx = CorrContext::new(config, phase)?;
    let mut users = Vec::with_capacity(ctx.k);
    let mut terms = Vec::with_capacity(ctx.k);
    for k in 0..ctx.k {
        let (user, term) = correlated_user(&ctx, k);
        users.push(user);
        terms.push(term);
    }
    Ok((RateBreakdown { prelog: ctx.prelog, users }, terms))
}

pub(crate) fn correlated_user(ctx: &CorrContext, k: usize) -> (UserRate, CorrelatedRateTerms) {
    let m = ctx.m;
    let delta = ctx.delta;
    let sn = ctx.noise;
    let eg = ctx.emi_gain;
    let chat = ctx.chat[k];
    let g = ctx.gamma[k];
    let f1 = ctx.f_c1;
    let f2 = ctx.f2(k);
    let f3 = ctx.f3(k);
    let f4 = ctx.tr_u2[k];
    let tr_u = ctx.tr_u[k];
    let f5 = tr_u * tr_u;
    let f6 = ctx.f6(k);
    let f7 = ctx.f[k].norm_sqr();
    let f8: Vec<f64> = (0..ctx.k).map(|i| ctx.f8(k, i)).collect();
    let f9: Vec<f64> = (0..ctx.k).map(|i| ctx.f9(k, i)).collect();
    let t1 = ctx.t1[k];
    let noise = ctx.noise_term(k);

    // --- EMI components (common prefactor β/(δ+1) applied at the sum). ---
    let cross_ek = ctx.emi_ris_cross(k);
    let e_comp = [
        m * m * chat * delta * delta * f7 * ctx.emi_los,
        (chat * delta * f2 + 2.0 * delta * eg * f1 + delta * (g + sn)) * f3,
        (m * chat * delta * f7 + (sn + g + chat * f2 + eg * f1) * f4) * f1,
        delta * delta * eg * t1 * t1 * ctx.emi_los * ctx.emi_los,
        2.0 * chat * delta * tr_u * m * (ctx.f[k].conj() * cross_ek).re,
        2.0 * delta * eg * tr_u * t1 * ctx.double_emi_coupling(),
        chat * f5 * f6,
        eg * f5 * ctx.ris_emi_square_trace(),
    ];
    let emi = ctx.beta_nlos * e_comp.iter().sum::<f64>();

    // --- Self-leakage components. ---
    let l_comp = [
        m * chat * delta * g * f7,
        (m * chat * chat * delta * f7
            + chat * chat * delta * f8[k]
            + (chat * chat * f2 + 2.0 * chat * g + chat * sn) * f4)
            * f2,
        (chat * delta * g + chat * delta * eg * f1 + chat * delta * sn) * f8[k],
        (g * g + g * sn + eg * (g + chat * f2) * f1) * f4,
        chat * delta * delta * eg * f9[k],
        2.0 * chat * delta * eg * tr_u * t1 * (ctx.f[k].conj() * cross_ek).re,
        delta * eg * (g + chat * f2) * f3,
        chat * eg * f5 * f6,
    ];
    let leak: f64 = l_comp.iter().sum();

    // --- Interference components. ---
    let mut interference = vec![0.0; ctx.k];
    let mut i_comps = vec![[0.0; 8]; ctx.k];
    for i in 0..ctx.k {
        if i == k {
            continue;
        }
        let chi = ctx.chat[i];
        let gi = ctx.gamma[i];
        let f2i = ctx.f2(i);
        let f7i = ctx.f[i].norm_sqr();
        let f6i = ctx.f6(i);
        // h̄_k^H Φ^H R_ris Φ h̄_i.
        let ris_ki = (ctx.phik[k].adjoint() * &ctx.r_ris * &ctx.phik[i])[(0, 0)];
        // h̄_i^H Φ^H R_ris Φ R_emi Φ^H a_N (for the eighth component).
        let cross_ei = ctx.emi_ris_cross(i);
        let comp = [
            gi * noise + m * m * chat * chi * delta * delta * f7 * f7i,
            (m * chat * chi * delta * f7 + (chi * (g + sn) + chi * eg * f1) * f4
                + chi * delta * eg * f3)
                * f2i,
            (chat * chi * delta * f8[i] + chat * chi * f4 * f2i) * f2,
            (chi * delta * eg * f1 + chi * delta * (g + sn)) * f8[i],
            (chat * chi * ris_ki.norm_sqr() + chi * eg * f6i) * f5,
            2.0 * chat * chi * delta * tr_u * m * (ctx.f[k].conj() * ctx.f[i] * ris_ki.conj()).re,
            chi * delta * delta * eg * f9[i],
            2.0 * chi * delta * eg * tr_u * t1 * (cross_ei.conj() * ctx.f[i]).re,
        ];
        i_comps[i] = comp;
        interference[i] = comp.iter().sum();
    }

    let user = assemble_user(
        ctx.p,
        ctx.sigma2,
        ctx.sigma_e2,
        ctx.prelog,
        noise * noise,
        leak,
        interference,
        Some(emi),
        noise,
    );
    let terms = CorrelatedRateTerms {
        f1,
        f2,
        f3,
        f4,
        f5,
        f6,
        f7,
        f8,
        f9,
        emi_components: e_comp,
        leak_components: l_comp,
        interference_components: i_comps,
    };
    (user, terms)
}

// ---------------------------------------------------------------------------
// Single-user SNR(x)
// ---------------------------------------------------------------------------

/// Coefficients of the single-user effective SNR as a rational function of
/// `x = |f(Φ)|²`: `SNR(x) = (s1·x + s2)²/(t1·x + t2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleUserSnr {
    pub s1: f64,
    pub s2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl SingleUserSnr {
    /// Evaluates the SNR at a given `x`.
    pub fn snr(&self, x: f64) -> f64 {
        let num = self.s1 * x + self.s2;
        num * num / (self.t1 * x + self.t2)
    }

    /// Left root `x_0^L = −s2/s1` of the derivative's numerator.
    pub fn x0_left(&self) -> f64 {
        -self.s2 / self.s1
    }

    /// Right root `x_0^R = (s2·t1 − 2·s1·t2)/(s1·t1)` of the derivative's
    /// numerator; the SNR decreases between the two roots and increases
    /// outside them.
    pub fn x0_right(&self) -> f64 {
        (self.s2 * self.t1 - 2.0 * self.s1 * self.t2) / (self.s1 * self.t1)
    }
}

/// Extracts the single-user SNR(x) coefficients by evaluating the effective
/// noise factor and the SINR denominator at `x = 0` and `x = 1` (both are
/// affine in `x`).
pub fn single_user_snr_coeffs(config: &SystemConfig) -> Result<SingleUserSnr, RateError> {
    if config.k != 1 {
        return Err(RateError::WrongCardinality { expected: 1, got: config.k });
    }
    if config.n <= 1 {
        return Err(RateError::WrongSpecialization { expected: "N > 1" });
    }
    let finite_pos = |f: crate::config::RicianFactor| f.finite().map(|v| v > 0.0).unwrap_or(false);
    if !finite_pos(config.delta) || !finite_pos(config.epsilon[0]) {
        return Err(RateError::WrongSpecialization {
            expected: "finite positive Rician factors on both hops",
        });
    }
    let ctx = IndepCtx::new(config, &PhaseShifts::zeros(config.n), CsiMode::Estimated)?;
    let sqrt_p = config.p.sqrt();
    let noise0 = ctx.noise_term(0, 0.0);
    let noise1 = ctx.noise_term(0, 1.0);
    let leak0 = ctx.leak_term(0, 0.0);
    let leak1 = ctx.leak_term(0, 1.0);
    Ok(SingleUserSnr {
        s1: sqrt_p * (noise1 - noise0),
        s2: sqrt_p * noise0,
        t1: config.p * (leak1 - leak0) + config.sigma2 * (noise1 - noise0),
        t2: config.p * leak0 + config.sigma2 * noise0,
    })
}

// ---------------------------------------------------------------------------
// Asymptotic power-scaling limits
// ---------------------------------------------------------------------------

/// Power-scaling schedule selecting which asymptotic closed form to evaluate.
/// `e_u` is the fixed power budget being divided by the growing dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingLaw {
    /// `p = E_u/M`, `M → ∞`, general Rician fading (phase-dependent).
    PowerOverM { e_u: f64 },
    /// `p = E_u/√M`, `M → ∞`, Rayleigh RIS–BS link.
    PowerOverSqrtMRayleighRisBs { e_u: f64 },
    /// `p = E_u/N`, `N → ∞`, Rayleigh RIS–BS link.
    PowerOverNRayleighRisBs { e_u: f64 },
    /// `p = E_u/N`, `N → ∞`, purely scattered user–RIS links (ε = 0, δ > 0).
    PowerOverNNlosUsers { e_u: f64 },
    /// Single user, `p = E_u/(MN²)` with aligned phases.
    SingleUserPowerOverMNSquared { e_u: f64 },
    /// Single user, `p = E_u/N²` with aligned phases.
    SingleUserPowerOverNSquared { e_u: f64 },
    /// Single user, Rayleigh RIS–BS link, `p = E_u/N`.
    SingleUserRayleighPowerOverN { e_u: f64 },
    /// Fixed power, `N → ∞`, Rayleigh RIS–BS link: `SINR → M·α_k/Σ_i α_i`.
    LargeNRayleighRisBs,
}

/// Limiting per-user SINRs and rates under a power-scaling schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
}

/// Evaluates the closed-form asymptotic limit of the configured scenario
/// under the given scaling schedule. The phase vector matters only for the
/// `PowerOverM` schedule (the only phase-dependent limit).
pub fn asymptotic_limit(
    config: &SystemConfig,
    phase: &PhaseShifts,
    law: ScalingLaw,
) -> Result<LimitReport, RateError> {
    let require_rayleigh = |reason| match config.delta {
        crate::config::RicianFactor::Finite(d) if d == 0.0 => Ok(()),
        _ => Err(RateError::ScheduleMismatch { reason }),
    };
    let require_single_user = || {
        if config.k == 1 {
            Ok(())
        } else {
            Err(RateError::ScheduleMismatch { reason: "schedule requires a single user" })
        }
    };
    let prelog = config.prelog();
    let tau = config.tau as f64;
    let s2 = config.sigma2;
    let sinr: Vec<f64> = match law {
        ScalingLaw::PowerOverM { e_u } => {
            let ctx = IndepCtx::new(config, phase, CsiMode::Estimated)?;
            let n = ctx.nf;
            let sn = s2 / (tau * e_u);
            (0..ctx.k)
                .map(|k| {
                    let a = ctx.pw[k];
                    let x = ctx.f[k].norm_sqr();
                    let e2 = n * a.los_nlos / (sn + n * a.los_nlos);
                    let num_root = x * a.los_los + n * a.los_nlos * e2;
                    let leak = n * x * a.los_nlos * a.los_los * (e2 * e2 + 1.0)
                        + sn * x * a.los_los * e2 * e2
                        + n * n * a.los_nlos * a.los_nlos * e2 * e2
                        + sn * n * a.los_nlos * e2 * e2;
                    let inter: f64 = (0..ctx.k)
                        .filter(|&i| i != k)
                        .map(|i| {
                            let b = ctx.pw[i];
                            let y = ctx.f[i].norm_sqr();
                            x * y * a.los_los * b.los_los
                                + n * x * a.los_los * b.los_nlos
                                + y * b.los_los * e2 * e2 * (n * a.los_nlos + sn)
                                + n * n * a.los_nlos * b.los_nlos * e2 * e2
                                + n * sn * b.los_nlos * e2 * e2
                        })
                        .sum();
                    e_u * num_root * num_root / (e_u * (leak + inter) + s2 * num_root)
                })
                .collect()
        }
        ScalingLaw::PowerOverSqrtMRayleighRisBs { e_u } => {
            require_rayleigh("p = E_u/√M requires a Rayleigh RIS-BS link")?;
            let hbar: Vec<_> = (0..config.k)
                .map(|k| channel::user_los_response(config, k))
                .collect::<Result<Vec<_>, _>>()?;
            let n = config.n as f64;
            (0..config.k)
                .map(|k| {
                    let a = config.cascaded_power(k);
                    let cov = n * a.nlos_ris_bs() + config.gamma[k];
                    let self_leak = n * a.nlos_nlos * (2.0 * a.nlos_los + a.nlos_nlos);
                    let inter: f64 = (0..config.k)
                        .filter(|&i| i != k)
                        .map(|i| {
                            let b = config.cascaded_power(i);
                            let hki2 = hbar[k].dotc(&hbar[i]).norm_sqr();
                            n * (a.nlos_los * b.nlos_nlos
                                + a.nlos_nlos * b.nlos_los
                                + a.nlos_nlos * b.nlos_nlos)
                                + a.nlos_los * b.nlos_los * hki2
                        })
                        .sum();
                    tau * e_u * e_u * cov * cov
                        / (tau * e_u * e_u * (self_leak + inter) + s2 * s2)
                })
                .collect()
        }
        ScalingLaw::PowerOverNRayleighRisBs { e_u } => {
            require_rayleigh("p = E_u/N requires a Rayleigh RIS-BS link")?;
            (0..config.k)
                .map(|k| {
                    let ba_k = config.beta * config.alpha[k];
                    let den: f64 = (0..config.k)
                        .map(|i| {
                            e_u * config.beta * config.alpha[i]
                                + (config.alpha[i] / config.alpha[k]) * s2 / tau
                        })
                        .sum::<f64>()
                        + s2 * (1.0 + s2 / (tau * e_u * ba_k));
                    e_u * config.m as f64 * ba_k / den
                })
                .collect()
        }
        ScalingLaw::PowerOverNNlosUsers { e_u } => {
            let delta = config.delta.finite().filter(|&d| d > 0.0).ok_or(
                RateError::ScheduleMismatch {
                    reason: "p = E_u/N with NLoS users requires a finite positive delta",
                },
            )?;
            for e in &config.epsilon {
                if *e != crate::config::RicianFactor::Finite(0.0) {
                    return Err(RateError::ScheduleMismatch {
                        reason: "p = E_u/N with NLoS users requires epsilon = 0",
                    });
                }
            }
            let m = config.m as f64;
            let sn = s2 / (tau * e_u);
            (0..config.k)
                .map(|k| {
                    let ck = config.beta * config.alpha[k] / (delta + 1.0);
                    let a3 = ck * delta * sn / ((ck + sn) * (ck + sn + m * ck * delta));
                    let a4 = ck / (ck + sn);
                    let e1 = a3 + a4;
                    let e2 = m * a3 + a4;
                    let e3 = m * a3 * a3 + 2.0 * a3 * a4 + a4 * a4;
                    let gain = delta * e2 + e1;
                    let den: f64 = (0..config.k)
                        .map(|i| {
                            let ci = config.beta * config.alpha[i] / (delta + 1.0);
                            ci * (m * ck * delta * delta * e2 * e2
                                + ck * (2.0 * delta * e2 * e2 + e3)
                                + sn * (delta * e2 * e2 + e3))
                        })
                        .sum();
                    e_u * m * ck * ck * gain * gain / (e_u * den + s2 * ck * gain)
                })
                .collect()
        }
        ScalingLaw::SingleUserPowerOverMNSquared { e_u } => {
            require_single_user()?;
            vec![(e_u / s2) * config.cascaded_power(0).los_los]
        }
        ScalingLaw::SingleUserPowerOverNSquared { e_u } => {
            require_single_user()?;
            vec![(e_u / s2) * config.m as f64 * config.cascaded_power(0).los_los]
        }
        ScalingLaw::SingleUserRayleighPowerOverN { e_u } => {
            require_single_user()?;
            require_rayleigh("p = E_u/N single-user limit requires a Rayleigh RIS-BS link")?;
            let ba = config.beta * config.alpha[0];
            vec![
                e_u * config.m as f64 * ba
                    / (e_u * ba + s2 / tau + s2 * (1.0 + s2 / (tau * e_u * ba))),
            ]
        }
        ScalingLaw::LargeNRayleighRisBs => {
            require_rayleigh("the large-N limit requires a Rayleigh RIS-BS link")?;
            let alpha_sum: f64 = config.alpha.iter().sum();
            config
                .alpha
                .iter()
                .map(|&a| config.m as f64 * a / alpha_sum)
                .collect()
        }
    };
    let rate = sinr.iter().map(|&s| prelog * (1.0 + s).log2()).collect();
    Ok(LimitReport { sinr, rate })
}

// ---------------------------------------------------------------------------
// Gradient coefficients of the independent model
// ---------------------------------------------------------------------------

/// Sensitivities of the independent-model rate terms with respect to the
/// phase-dependent quantities: every term depends on θ only through the
/// `|f_k|²` values and the cross gains `f_k^H f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentGradientCoefficients {
    /// `∂E_noise_k/∂|f_k|²`.
    pub noise_f2: Vec<f64>,
    /// `∂E_leak_k/∂|f_k|²`.
    pub leak_f2: Vec<f64>,
    /// `∂I_ki/∂(|f_k|²·|f_i|²)`, indexed `[k][i]`.
    pub cross_f4: Vec<Vec<f64>>,
    /// `∂I_ki/∂|f_k|²` (excluding the quartic part).
    pub cross_fk2: Vec<Vec<f64>>,
    /// `∂I_ki/∂|f_i|²` (excluding the quartic part).
    pub cross_fi2: Vec<Vec<f64>>,
    /// Complex sensitivity of `I_ki` to `f_k^H f_i`: the interference term
    /// contains `2·Re{coeff · f_k^H f_i}` with this coefficient.
    pub cross_inner: Vec<Vec<Complex64>>,
}

impl IndependentGradientCoefficients {
    pub(crate) fn from_ctx(ctx: &IndepCtx) -> Self {
        let (m, n, sn) = (ctx.m, ctx.nf, ctx.noise);
        let noise_f2 = (0..ctx.k).map(|k| m * ctx.pw[k].los_los).collect();
        let leak_f2 = (0..ctx.k)
            .map(|k| ctx.leak_term(k, 1.0) - ctx.leak_term(k, 0.0))
            .collect();
        let mut cross_f4 = vec![vec![0.0; ctx.k]; ctx.k];
        let mut cross_fk2 = vec![vec![0.0; ctx.k]; ctx.k];
        let mut cross_fi2 = vec![vec![0.0; ctx.k]; ctx.k];
        let mut cross_inner = vec![vec![Complex64::default(); ctx.k]; ctx.k];
        for k in 0..ctx.k {
            let a = ctx.pw[k];
            let (e1, e2, _) = ctx.e[k];
            for i in 0..ctx.k {
                if i == k {
                    continue;
                }
                let b = ctx.pw[i];
                cross_f4[k][i] = m * m * a.los_los * b.los_los;
                cross_fk2[k][i] = m
                    * (m * n * a.los_los * b.los_nlos
                        + n * a.los_los * b.nlos_los
                        + n * a.los_los * b.nlos_nlos
                        + 2.0 * m * e1 * a.los_los * b.nlos_nlos
                        + ctx.gamma[i] * a.los_los);
                cross_fi2[k][i] = m
                    * (b.los_los
                        * (m * n * a.los_nlos * e2 * e2
                            + n * a.nlos_los * e2 * e2
                            + n * a.nlos_nlos * e2 * e2
                            + 2.0 * m * a.nlos_nlos * e1 * e2)
                        + b.los_los * (ctx.gamma[k] + sn) * e2 * e2);
                cross_inner[k][i] =
                    ctx.hinner[k][i].conj() * (m * m * e1 * a.los_los * b.nlos_los);
            }
        }
        IndependentGradientCoefficients {
            noise_f2,
            leak_f2,
            cross_f4,
            cross_fk2,
            cross_fi2,
            cross_inner,
        }
    }
}

/// Gradient coefficients of the independent model at the given phase vector.
pub fn independent_gradient_coefficients(
    config: &SystemConfig,
    phase: &PhaseShifts,
) -> Result<IndependentGradientCoefficients, RateError> {
    let ctx = IndepCtx::new(config, phase, CsiMode::Estimated)?;
    Ok(IndependentGradientCoefficients::from_ctx(&ctx))
}
