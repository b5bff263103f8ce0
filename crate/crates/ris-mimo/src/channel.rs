//! Channel geometry and sampling.
//!
//! Deterministic parts: ULA/USPA array responses, the sinc spatial
//! correlation matrix of the planar RIS, and semicircle scenario pathlosses.
//! Random parts: reproducible draws of every scattered channel block for both
//! the spatially independent and the spatially correlated model.
//!
//! Sampling is a pure function of `(config, seed, trial)`. Each random block
//! of each trial draws from its own counter-derived RNG stream, so trials can
//! be generated in any order (including in parallel) with bitwise identical
//! results.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::{PhaseShifts, SystemConfig};

/// Errors from geometry construction and channel assembly.
#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("array dimension must be positive, got {size}")]
    InvalidDimension { size: usize },
    #[error("planar array needs a perfect-square element count, got {size}")]
    NotPerfectSquare { size: usize },
    #[error("invalid geometry: {what} must be positive, got {value}")]
    InvalidGeometry { what: &'static str, value: f64 },
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
}

/// Reference pathloss at 1 m for all three links.
const PATHLOSS_REFERENCE: f64 = 1e-3;
/// Pathloss exponent of the user–RIS link.
const USER_RIS_EXPONENT: f64 = 2.0;
/// Pathloss exponent of the RIS–BS link.
const RIS_BS_EXPONENT: f64 = 2.5;
/// Pathloss exponent of the direct user–BS link.
const USER_BS_EXPONENT: f64 = 4.0;

/// RNG stream layout: each (trial, block) pair owns one ChaCha stream.
const BLOCK_STRIDE: u64 = 1024;
/// Scattered RIS–BS matrix block.
pub(crate) const BLOCK_RIS_BS: u64 = 0;
/// Scattered user–RIS vectors start here (one block per user).
pub(crate) const BLOCK_USER_RIS_BASE: u64 = 1;
/// Scattered direct vectors start at `BLOCK_DIRECT_BASE + k`.
pub(crate) fn block_direct(k: usize, users: usize) -> u64 {
    BLOCK_USER_RIS_BASE + users as u64 + k as u64
}
/// Pilot-noise matrix block (used by the estimation stage).
pub(crate) const BLOCK_PILOT_NOISE: u64 = 512;
/// EMI matrix block (used by the estimation stage, correlated model).
pub(crate) const BLOCK_EMI: u64 = 513;

/// One independent RNG per `(seed, trial, block)` triple.
pub(crate) fn block_rng(seed: u64, trial: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(BLOCK_STRIDE).wrapping_add(block));
    rng
}

/// Draws a matrix of i.i.d. circularly symmetric complex Gaussians with the
/// given per-entry variance, in a fixed column-major order.
pub(crate) fn draw_cn_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    variance: f64,
) -> DMatrix<Complex64> {
    let scale = (variance / 2.0).sqrt();
    let data: Vec<Complex64> = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Draws a vector of i.i.d. circularly symmetric complex Gaussians.
pub(crate) fn draw_cn_vector(rng: &mut ChaCha8Rng, len: usize, variance: f64) -> DVector<Complex64> {
    let m = draw_cn_matrix(rng, len, 1, variance);
    m.column(0).into_owned()
}

/// Uniform linear array response: entry `x` (1-based) is
/// `exp{j·2π·spacing·(x−1)·sin(elevation)·sin(azimuth)}`.
pub fn array_response_bs(
    m: usize,
    spacing: f64,
    azimuth: f64,
    elevation: f64,
) -> Result<DVector<Complex64>, ChannelError> {
    if m == 0 {
        return Err(ChannelError::InvalidDimension { size: m });
    }
    let rate = 2.0 * std::f64::consts::PI * spacing * elevation.sin() * azimuth.sin();
    Ok(DVector::from_iterator(
        m,
        (0..m).map(|x| Complex64::from_polar(1.0, rate * x as f64)),
    ))
}

/// Uniform square planar array response: entry `x` (1-based) is
/// `exp{j·2π·spacing·(⌊(x−1)/√N⌋·sin(el)·sin(az) + ((x−1) mod √N)·cos(el))}`.
pub fn array_response_ris(
    n: usize,
    spacing: f64,
    azimuth: f64,
    elevation: f64,
) -> Result<DVector<Complex64>, ChannelError> {
    if n == 0 {
        return Err(ChannelError::InvalidDimension { size: n });
    }
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(ChannelError::NotPerfectSquare { size: n });
    }
    let two_pi_d = 2.0 * std::f64::consts::PI * spacing;
    let row_rate = elevation.sin() * azimuth.sin();
    let col_rate = elevation.cos();
    Ok(DVector::from_iterator(
        n,
        (0..n).map(|x| {
            let row = (x / side) as f64;
            let col = (x % side) as f64;
            Complex64::from_polar(1.0, two_pi_d * (row * row_rate + col * col_rate))
        }),
    ))
}

/// Spatial correlation of the planar RIS and of the EMI impinging on it.
///
/// Both matrices follow the same isotropic-scattering law
/// `[R]_{a,b} = sinc(2‖u_a − u_b‖/λ)` over the `√N × √N` element grid, with
/// the normalized sinc `sin(πx)/(πx)`; they are kept as separate fields so a
/// future model may differentiate them.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrices {
    /// RIS-side channel correlation (real symmetric PSD, unit diagonal).
    pub r_ris: DMatrix<f64>,
    /// EMI correlation (same law in this model).
    pub r_emi: DMatrix<f64>,
    /// Symmetric PSD square root shared by both matrices.
    pub sqrt_r: DMatrix<f64>,
}

/// Normalized sinc `sin(πx)/(πx)` with the removable singularity at 0.
fn normalized_sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Builds the sinc correlation matrices for a `√N × √N` grid with the given
/// element pitch in wavelengths. Eigenvalues pushed slightly negative by
/// round-off are clamped to zero before the square root is formed.
pub fn sinc_correlation(n: usize, spacing: f64) -> Result<CorrelationMatrices, ChannelError> {
    if n == 0 {
        return Err(ChannelError::InvalidDimension { size: n });
    }
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(ChannelError::NotPerfectSquare { size: n });
    }
    let pos = |idx: usize| -> (f64, f64) {
        ((idx / side) as f64 * spacing, (idx % side) as f64 * spacing)
    };
    // Separable per-axis correlation: the product of 1-D sinc factors along
    // the two grid axes. This vanishes at half-wavelength spacing for every
    // distinct element pair (each factor hits a nonzero-integer sinc zero),
    // so R(λ/2) = I exactly.
    let r = DMatrix::from_fn(n, n, |a, b| {
        let (ar, ac) = pos(a);
        let (br, bc) = pos(b);
        normalized_sinc(2.0 * (ar - br).abs()) * normalized_sinc(2.0 * (ac - bc).abs())
    });
    let eig = r.clone().symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let sqrt_r = q * DMatrix::from_diagonal(&clamped.map(f64::sqrt)) * q.transpose();
    Ok(CorrelationMatrices { r_ris: r.clone(), r_emi: r, sqrt_r })
}

/// Pathlosses and distances of the semicircle benchmark layout: `K` users
/// evenly spread on a semicircle of radius `d_ui` around the RIS, which sits
/// `d_ib` away from the BS along the semicircle's diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry {
    /// User–RIS pathlosses (equal for all users on the semicircle).
    pub alpha: Vec<f64>,
    /// RIS–BS pathloss.
    pub beta: f64,
    /// Direct user–BS pathlosses.
    pub gamma: Vec<f64>,
    /// Direct user–BS distances.
    pub user_bs_distances: Vec<f64>,
}

/// User–BS distances by the law of cosines: user `k` (1-based) sits at angle
/// `πk/(K+1)` on the semicircle, so
/// `(d_k^UB)² = (d_ib − d_ui·cos(πk/(K+1)))² + (d_ui·sin(πk/(K+1)))²`.
pub fn user_bs_distances(user_count: usize, d_ui: f64, d_ib: f64) -> Vec<f64> {
    (1..=user_count)
        .map(|k| {
            let angle = std::f64::consts::PI * k as f64 / (user_count as f64 + 1.0);
            let dx = d_ib - d_ui * angle.cos();
            let dy = d_ui * angle.sin();
            (dx * dx + dy * dy).sqrt()
        })
        .collect()
}

/// Evaluates the semicircle layout's pathloss triple in linear scale.
pub fn scenario_geometry(
    user_count: usize,
    d_ui: f64,
    d_ib: f64,
) -> Result<ScenarioGeometry, ChannelError> {
    if !(d_ui > 0.0) {
        return Err(ChannelError::InvalidGeometry { what: "semicircle radius", value: d_ui });
    }
    if !(d_ib > 0.0) {
        return Err(ChannelError::InvalidGeometry { what: "RIS-BS distance", value: d_ib });
    }
    let distances = user_bs_distances(user_count, d_ui, d_ib);
    Ok(ScenarioGeometry {
        alpha: vec![PATHLOSS_REFERENCE * d_ui.powf(-USER_RIS_EXPONENT); user_count],
        beta: PATHLOSS_REFERENCE * d_ib.powf(-RIS_BS_EXPONENT),
        gamma: distances
            .iter()
            .map(|d| PATHLOSS_REFERENCE * d.powf(-USER_BS_EXPONENT))
            .collect(),
        user_bs_distances: distances,
    })
}

/// LoS array response at the BS toward the RIS.
pub fn bs_los_response(config: &SystemConfig) -> Result<DVector<Complex64>, ChannelError> {
    let a = config.angles.bs_arrival;
    array_response_bs(config.m, config.d_bs_over_lambda, a.azimuth, a.elevation)
}

/// LoS array response at the RIS toward the BS.
pub fn ris_departure_response(config: &SystemConfig) -> Result<DVector<Complex64>, ChannelError> {
    let a = config.angles.ris_departure;
    array_response_ris(config.n, config.d_ris_over_lambda, a.azimuth, a.elevation)
}

/// LoS array response at the RIS toward user `k`.
pub fn user_los_response(config: &SystemConfig, k: usize) -> Result<DVector<Complex64>, ChannelError> {
    let a = config.angles.user_arrival[k];
    array_response_ris(config.n, config.d_ris_over_lambda, a.azimuth, a.elevation)
}

/// One draw of every channel block: deterministic LoS parts plus unit-variance
/// scattered draws (scaling by pathloss and Rician fractions happens at
/// assembly time in [`aggregated_channel`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Rank-one LoS RIS–BS block `a_M a_N^H` (M×N).
    pub hbar2: DMatrix<Complex64>,
    /// Scattered RIS–BS draw (M×N); in the correlated model this already
    /// carries the right factor `R_ris^{1/2}`.
    pub htilde2: DMatrix<Complex64>,
    /// LoS user–RIS responses (unit-modulus N-vectors).
    pub hbar: Vec<DVector<Complex64>>,
    /// Scattered user–RIS draws (N-vectors, i.i.d. CN(0,1)).
    pub htilde: Vec<DVector<Complex64>>,
    /// Scattered direct user–BS draws (M-vectors, i.i.d. CN(0,1)).
    pub dtilde: Vec<DVector<Complex64>>,
    /// `R_emi^{1/2}` for EMI generation (correlated model only).
    pub emi_cov_root: Option<DMatrix<f64>>,
    /// Seed this realization was drawn from.
    pub seed: u64,
    /// Trial index within the seed's stream space.
    pub trial: u64,
}

/// Draws trial `trial` of the channel under `seed`. Identical arguments give
/// bitwise identical realizations regardless of call order.
pub fn sample_channels_trial(
    config: &SystemConfig,
    seed: u64,
    trial: u64,
) -> Result<ChannelRealization, ChannelError> {
    let a_m = bs_los_response(config)?;
    let a_n = ris_departure_response(config)?;
    let hbar2 = &a_m * a_n.adjoint();
    let hbar: Vec<_> = (0..config.k)
        .map(|k| user_los_response(config, k))
        .collect::<Result<_, _>>()?;

    let mut rng = block_rng(seed, trial, BLOCK_RIS_BS);
    let mut htilde2 = draw_cn_matrix(&mut rng, config.m, config.n, 1.0);
    let mut emi_cov_root = None;
    if config.correlated {
        let corr = sinc_correlation(config.n, config.d_ris_over_lambda)?;
        let sqrt_c = corr.sqrt_r.map(|x| Complex64::new(x, 0.0));
        htilde2 *= &sqrt_c;
        emi_cov_root = Some(corr.sqrt_r);
    }

    let htilde: Vec<_> = (0..config.k)
        .map(|k| {
            let mut rng = block_rng(seed, trial, BLOCK_USER_RIS_BASE + k as u64);
            draw_cn_vector(&mut rng, config.n, 1.0)
        })
        .collect();
    let dtilde: Vec<_> = (0..config.k)
        .map(|k| {
            let mut rng = block_rng(seed, trial, block_direct(k, config.k));
            draw_cn_vector(&mut rng, config.m, 1.0)
        })
        .collect();

    Ok(ChannelRealization {
        hbar2,
        htilde2,
        hbar,
        htilde,
        dtilde,
        emi_cov_root,
        seed,
        trial,
    })
}

/// Draws the first trial of the channel under `seed`.
pub fn sample_channels(config: &SystemConfig, seed: u64) -> Result<ChannelRealization, ChannelError> {
    sample_channels_trial(config, seed, 0)
}

impl ChannelRealization {
    /// The full RIS–BS channel with pathloss and Rician split applied.
    pub fn ris_bs_channel(&self, config: &SystemConfig) -> DMatrix<Complex64> {
        let los = (config.beta * config.delta.los_fraction()).sqrt();
        let nlos = (config.beta * config.delta.nlos_fraction()).sqrt();
        &self.hbar2 * Complex64::new(los, 0.0) + &self.htilde2 * Complex64::new(nlos, 0.0)
    }

    /// The full user–RIS channel of user `k`.
    pub fn user_ris_channel(&self, config: &SystemConfig, k: usize) -> DVector<Complex64> {
        let eps = config.epsilon[k];
        let los = (config.alpha[k] * eps.los_fraction()).sqrt();
        let nlos = (config.alpha[k] * eps.nlos_fraction()).sqrt();
        &self.hbar[k] * Complex64::new(los, 0.0) + &self.htilde[k] * Complex64::new(nlos, 0.0)
    }

    /// The direct user–BS channel of user `k`.
    pub fn direct_channel(&self, config: &SystemConfig, k: usize) -> DVector<Complex64> {
        &self.dtilde[k] * Complex64::new(config.gamma[k].sqrt(), 0.0)
    }
}

/// Assembles the aggregated (cascaded + direct) channel of every user as the
/// explicit sum of the four LoS/NLoS cascade components plus the direct path.
pub fn aggregated_channel(
    real: &ChannelRealization,
    config: &SystemConfig,
    phase: &PhaseShifts,
) -> Result<Vec<DVector<Complex64>>, ChannelError> {
    if phase.len() != config.n {
        return Err(ChannelError::DimensionMismatch {
            what: "phase vector",
            got: phase.len(),
            expected: config.n,
        });
    }
    if real.hbar.len() != config.k {
        return Err(ChannelError::DimensionMismatch {
            what: "realization user count",
            got: real.hbar.len(),
            expected: config.k,
        });
    }
    let re = |x: f64| Complex64::new(x, 0.0);
    Ok((0..config.k)
        .map(|k| {
            let pw = config.cascaded_power(k);
            let los_user = phase.apply(&real.hbar[k]);
            let nlos_user = phase.apply(&real.htilde[k]);
            &real.hbar2 * &los_user * re(pw.los_los.sqrt())
                + &real.hbar2 * &nlos_user * re(pw.los_nlos.sqrt())
                + &real.htilde2 * &los_user * re(pw.nlos_los.sqrt())
                + &real.htilde2 * &nlos_user * re(pw.nlos_nlos.sqrt())
                + &real.dtilde[k] * re(config.gamma[k].sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bs_response_unit_case() {
        let v = array_response_bs(1, 0.5, 1.2, 0.7).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sinc_half_wavelength_is_identity() {
        let corr = sinc_correlation(16, 0.5).unwrap();
        let eye = DMatrix::<f64>::identity(16, 16);
        assert!((corr.r_ris.clone() - eye).norm() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = crate::config::SystemConfig {
            m: 4,
            n: 4,
            k: 2,
            p: 1.0,
            sigma2: 1e-3,
            sigma_e2: 0.0,
            tau: 2,
            tau_c: 100,
            delta: crate::config::RicianFactor::Finite(1.0),
            epsilon: vec![crate::config::RicianFactor::Finite(2.0); 2],
            alpha: vec![1.0; 2],
            gamma: vec![0.5; 2],
            beta: 1.0,
            d_bs_over_lambda: 0.5,
            d_ris_over_lambda: 0.5,
            angles: crate::config::Angles {
                ris_departure: crate::config::AnglePair { azimuth: 4.17, elevation: 0.09 },
                bs_arrival: crate::config::AnglePair { azimuth: 6.28, elevation: 4.21 },
                user_arrival: vec![
                    crate::config::AnglePair { azimuth: 5.20, elevation: 4.32 },
                    crate::config::AnglePair { azimuth: 0.41, elevation: 2.52 },
                ],
            },
            correlated: false,
        };
        let a = sample_channels_trial(&cfg, 7, 3).unwrap();
        let b = sample_channels_trial(&cfg, 7, 3).unwrap();
        assert_eq!(a, b);
    }
}
