//! LMMSE estimation of the aggregated channel, for both the spatially
//! independent and the correlated+EMI model, plus closed-form MSE/NMSE.
//!
//! Both estimators operate on the projected pilot observation of one user
//! (the pilot matrix is orthonormal, so users decouple). The independent
//! model's estimator is an affine map `q̂ = A y + B` whose matrix `A` has the
//! two-parameter structure `a₃·a_M a_M^H + a₄·I`; the correlated model's
//! estimator multiplies the centered observation by a full M×M matrix `Υ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{
    self, aggregated_channel, bs_los_response, sinc_correlation, ChannelError,
    ChannelRealization,
};
use crate::config::{PhaseShifts, SystemConfig};

/// Errors from the estimation stage.
#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("operation requires the {required} model but the config selects the other")]
    WrongModel { required: &'static str },
    #[error("pilot length {tau} is shorter than the user count {users}")]
    PilotShortage { tau: usize, users: usize },
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
    #[error("degenerate configuration: the estimator's normal matrix is singular")]
    DegenerateConfig,
    #[error("the correlated estimator requires a finite RIS-BS Rician factor")]
    InfiniteRicianUnsupported,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Per-user coefficients of the independent-model LMMSE estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseUser {
    /// Covariance coefficient of the rank-one part: `a₁ = N·cδ`.
    pub a1: f64,
    /// Covariance coefficient of the identity part: `a₂ = N·c(ε+1) + γ`.
    pub a2: f64,
    /// Estimator rank-one coefficient `a₃`.
    pub a3: f64,
    /// Estimator identity coefficient `a₄`.
    pub a4: f64,
    /// MSE-matrix rank-one coefficient `a₅`.
    pub a5: f64,
    /// MSE-matrix identity coefficient `a₆`.
    pub a6: f64,
    /// Estimation-quality coefficient `e₁ = a₃ + a₄` (trace scale).
    pub e1: f64,
    /// Estimation-quality coefficient `e₂ = M·a₃ + a₄` (LoS-direction gain).
    pub e2: f64,
    /// Estimation-quality coefficient `e₃ = M·a₃² + 2a₃a₄ + a₄²`.
    pub e3: f64,
    /// The estimator matrix `A = a₃·a_M a_M^H + a₄·I`.
    pub a_mat: DMatrix<Complex64>,
    /// The estimator offset `B` (deterministic-mean correction).
    pub b_vec: DVector<Complex64>,
}

/// Independent-model LMMSE estimator for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseModel {
    pub users: Vec<LmmseUser>,
}

/// Per-user correlated-model estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonUser {
    /// The Hermitian estimator matrix `Υ = ψ¹ · (inner)⁻¹`.
    pub upsilon: DMatrix<Complex64>,
    /// The inverse of the inner matrix alone (`Υ = ψ¹ · upsilon_inner`);
    /// gradient assembly differentiates through this factorization.
    pub upsilon_inner: DMatrix<Complex64>,
    /// Aggregated-channel power `ψ¹ = ĉ·h̄^HΦ^H R_ris Φ h̄ + γ`.
    pub psi1: f64,
    /// Cascaded NLoS strength `ĉ = βα/(δ+1)`.
    pub chat: f64,
}

/// Correlated-model LMMSE estimator for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonModel {
    pub users: Vec<UpsilonUser>,
}

/// One user's estimate with its exact decomposition `q = q̂ + error`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub q_hat: Vec<DVector<Complex64>>,
    pub error: Vec<DVector<Complex64>>,
    pub observation: Vec<DVector<Complex64>>,
}

/// Per-user MSE summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    /// Trace of the estimation MSE matrix.
    pub trace_mse: f64,
    /// MSE normalized by the aggregated-channel covariance trace, in [0,1].
    pub nmse: f64,
}

/// Scalar LMMSE coefficients of one independent-model user.
pub(crate) fn lmmse_scalars(config: &SystemConfig, k: usize) -> LmmseScalars {
    let pw = config.cascaded_power(k);
    let n = config.n as f64;
    let m = config.m as f64;
    let noise = config.pilot_noise_power();
    let a1 = n * pw.los_nlos;
    let a2 = n * pw.nlos_ris_bs() + config.gamma[k];
    let denom1 = a2 + noise;
    let denom2 = a2 + noise + m * a1;
    let (a3, a4, a5, a6) = if denom1 > 0.0 {
        (
            a1 * noise / (denom1 * denom2),
            a2 / denom1,
            a1 * noise * noise / (denom1 * denom2),
            a2 * noise / denom1,
        )
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let e1 = a3 + a4;
    let e2 = m * a3 + a4;
    let e3 = m * a3 * a3 + 2.0 * a3 * a4 + a4 * a4;
    LmmseScalars { a1, a2, a3, a4, a5, a6, e1, e2, e3 }
}

/// Plain-number part of [`LmmseUser`], shared with the rate engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LmmseScalars {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

/// Builds the independent-model LMMSE estimator.
pub fn lmmse_model(config: &SystemConfig, phase: &PhaseShifts) -> Result<LmmseModel, EstimationError> {
    if config.correlated {
        return Err(EstimationError::WrongModel { required: "independent" });
    }
    if phase.len() != config.n {
        return Err(EstimationError::DimensionMismatch {
            what: "phase vector",
            got: phase.len(),
            expected: config.n,
        });
    }
    let a_m = bs_los_response(config)?;
    let a_n = channel::ris_departure_response(config)?;
    let eye = DMatrix::<Complex64>::identity(config.m, config.m);
    let users = (0..config.k)
        .map(|k| {
            let s = lmmse_scalars(config, k);
            let a_mat =
                &a_m * a_m.adjoint() * Complex64::new(s.a3, 0.0) + &eye * Complex64::new(s.a4, 0.0);
            // Deterministic mean of q: √(cδε)·H̄₂Φh̄ = √(cδε)·a_M·(a_N^H Φ h̄).
            let hbar_k = channel::user_los_response(config, k)?;
            let mean_dir = a_n.dotc(&phase.apply(&hbar_k));
            let mean = &a_m * (mean_dir * Complex64::new(config.cascaded_power(k).los_los.sqrt(), 0.0));
            // B = (I − A)·mean; A acts on the LoS direction with gain e₂.
            let b_vec = &mean * Complex64::new(1.0 - s.e2, 0.0);
            Ok(LmmseUser {
                a1: s.a1,
                a2: s.a2,
                a3: s.a3,
                a4: s.a4,
                a5: s.a5,
                a6: s.a6,
                e1: s.e1,
                e2: s.e2,
                e3: s.e3,
                a_mat,
                b_vec,
            })
        })
        .collect::<Result<Vec<_>, EstimationError>>()?;
    Ok(LmmseModel { users })
}

/// Column `k` of the τ×τ unitary DFT matrix — the orthonormal pilot sequence
/// assigned to user `k`.
pub(crate) fn pilot_sequence(tau: usize, k: usize) -> DVector<Complex64> {
    let scale = 1.0 / (tau as f64).sqrt();
    DVector::from_iterator(
        tau,
        (0..tau).map(|a| {
            Complex64::from_polar(
                scale,
                -2.0 * std::f64::consts::PI * (a * k) as f64 / tau as f64,
            )
        }),
    )
}

/// Projected pilot observation of every user: the aggregated channel plus
/// scaled projected receiver noise (plus projected EMI in the correlated
/// model). Noise and EMI are drawn from the realization's own trial streams.
pub fn pilot_observation(
    real: &ChannelRealization,
    config: &SystemConfig,
    phase: &PhaseShifts,
    seed: u64,
) -> Result<Vec<DVector<Complex64>>, EstimationError> {
    if config.tau < config.k {
        return Err(EstimationError::PilotShortage { tau: config.tau, users: config.k });
    }
    let q = aggregated_channel(real, config, phase)?;
    let inv_sqrt_tp = 1.0 / (config.tau as f64 * config.p).sqrt();

    let mut rng = channel::block_rng(seed, real.trial, channel::BLOCK_PILOT_NOISE);
    let noise = channel::draw_cn_matrix(&mut rng, config.m, config.tau, config.sigma2);

    let emi_times_phi: Option<DMatrix<Complex64>> = if config.correlated && config.sigma_e2 > 0.0 {
        let root = real
            .emi_cov_root
            .as_ref()
            .ok_or(EstimationError::WrongModel { required: "correlated" })?
            .map(|x| Complex64::new(x, 0.0));
        let mut rng = channel::block_rng(seed, real.trial, channel::BLOCK_EMI);
        let v_raw = channel::draw_cn_matrix(&mut rng, config.n, config.tau, config.sigma_e2);
        let v = root * v_raw;
        let h2 = real.ris_bs_channel(config);
        // H₂·Φ·V, with Φ applied row-wise to V.
        let mut phi_v = v;
        for (i, &t) in phase.theta().iter().enumerate() {
            let rot = Complex64::from_polar(1.0, t);
            for j in 0..config.tau {
                phi_v[(i, j)] *= rot;
            }
        }
        Some(h2 * phi_v)
    } else {
        None
    };

    Ok((0..config.k)
        .map(|k| {
            let s_k = pilot_sequence(config.tau, k);
            let mut y = &q[k] + (&noise * &s_k) * Complex64::new(inv_sqrt_tp, 0.0);
            if let Some(ev) = &emi_times_phi {
                y += (ev * &s_k) * Complex64::new(inv_sqrt_tp, 0.0);
            }
            y
        })
        .collect())
}

/// Applies the LMMSE estimator of the configured model to the observations,
/// returning estimates together with the exact residual `q − q̂`.
pub fn lmmse_estimate(
    obs: &[DVector<Complex64>],
    real: &ChannelRealization,
    config: &SystemConfig,
    phase: &PhaseShifts,
) -> Result<EstimateResult, EstimationError> {
    if obs.len() != config.k {
        return Err(EstimationError::DimensionMismatch {
            what: "observations",
            got: obs.len(),
            expected: config.k,
        });
    }
    let q = aggregated_channel(real, config, phase)?;
    let q_hat: Vec<DVector<Complex64>> = if config.correlated {
        let model = upsilon_model(config, phase)?;
        (0..config.k)
            .map(|k| {
                let mean_scale = config.cascaded_power(k).los_los.sqrt();
                let hbar_dir = &real.hbar2 * phase.apply(&real.hbar[k]);
                let mean = hbar_dir * Complex64::new(mean_scale, 0.0);
                &mean + &model.users[k].upsilon * (&obs[k] - &mean)
            })
            .collect()
    } else {
        let model = lmmse_model(config, phase)?;
        (0..config.k)
            .map(|k| &model.users[k].a_mat * &obs[k] + &model.users[k].b_vec)
            .collect()
    };
    let error: Vec<_> = (0..config.k).map(|k| &q[k] - &q_hat[k]).collect();
    Ok(EstimateResult { q_hat, error, observation: obs.to_vec() })
}

/// Builds the correlated-model estimator matrices `Υ_k`.
pub fn upsilon_model(config: &SystemConfig, phase: &PhaseShifts) -> Result<UpsilonModel, EstimationError> {
    if !config.correlated {
        return Err(EstimationError::WrongModel { required: "correlated" });
    }
    let delta = config
        .delta
        .finite()
        .ok_or(EstimationError::InfiniteRicianUnsupported)?;
    let corr = sinc_correlation(config.n, config.d_ris_over_lambda)?;
    let r_ris = corr.r_ris.map(|x| Complex64::new(x, 0.0));
    let r_emi = corr.r_emi.map(|x| Complex64::new(x, 0.0));
    let a_m = bs_los_response(config)?;
    let a_n = channel::ris_departure_response(config)?;
    let noise = config.pilot_noise_power();
    // EMI leakage strength into the pilot observation per unit correlation.
    let emi_gain = config.sigma_e2 * config.beta
        / (config.tau as f64 * config.p * (delta + 1.0));

    // Tr{R_ris Φ R_emi Φ^H} — the total pilot-EMI power factor.
    let phi_remi_phih = hadamard_sandwich(&r_emi, phase);
    let f_c1 = (&r_ris * &phi_remi_phih).trace().re;
    // a_N^H Φ R_emi Φ^H a_N — EMI power along the LoS direction.
    let emi_los = (a_n.adjoint() * &phi_remi_phih * &a_n)[(0, 0)].re;

    let eye = DMatrix::<Complex64>::identity(config.m, config.m);
    let users = (0..config.k)
        .map(|k| {
            let chat = config.cascaded_nlos_ris_bs(k);
            let hbar_k = channel::user_los_response(config, k)?;
            let phik = phase.apply(&hbar_k);
            let psi1 = chat * (phik.adjoint() * &r_ris * &phik)[(0, 0)].re + config.gamma[k];
            let scalar = psi1 + noise + emi_gain * f_c1;
            let inner = &eye * Complex64::new(scalar, 0.0)
                + &a_m * a_m.adjoint() * Complex64::new(emi_gain * delta * emi_los, 0.0);
            let lu = inner.lu();
            let upsilon_inner = lu
                .solve(&eye)
                .ok_or(EstimationError::DegenerateConfig)?;
            // Enforce Hermitianity lost to round-off in the solve.
            let upsilon_inner = (&upsilon_inner + upsilon_inner.adjoint()) * Complex64::new(0.5, 0.0);
            let upsilon = &upsilon_inner * Complex64::new(psi1, 0.0);
            Ok(UpsilonUser { upsilon, upsilon_inner, psi1, chat })
        })
        .collect::<Result<Vec<_>, EstimationError>>()?;
    Ok(UpsilonModel { users })
}

/// `Φ · X · Φ^H` for an N×N matrix `X`.
pub(crate) fn hadamard_sandwich(x: &DMatrix<Complex64>, phase: &PhaseShifts) -> DMatrix<Complex64> {
    let c = phase.unit_diagonal();
    DMatrix::from_fn(x.nrows(), x.ncols(), |a, b| c[a] * x[(a, b)] * c[b].conj())
}

/// Closed-form per-user estimation MSE trace and NMSE for the configured model.
pub fn mse_nmse(config: &SystemConfig, phase: &PhaseShifts) -> Result<Vec<MseReport>, EstimationError> {
    let m = config.m as f64;
    if config.correlated {
        let model = upsilon_model(config, phase)?;
        Ok(model
            .users
            .iter()
            .map(|u| {
                let trace_upsilon = u.upsilon.trace().re;
                MseReport {
                    trace_mse: u.psi1 * (m - trace_upsilon),
                    nmse: 1.0 - trace_upsilon / m,
                }
            })
            .collect())
    } else {
        Ok((0..config.k)
            .map(|k| {
                let s = lmmse_scalars(config, k);
                let cov_trace = s.a1 + s.a2;
                MseReport {
                    trace_mse: m * (s.a5 + s.a6),
                    nmse: if cov_trace > 0.0 { (s.a5 + s.a6) / cov_trace } else { 0.0 },
                }
            })
            .collect())
    }
}
