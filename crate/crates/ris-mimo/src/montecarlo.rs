//! Monte Carlo oracles: sample-moment estimation of the effective SINR and
//! of every moment identity the closed forms rely on.
//!
//! The effective SINR is a ratio of expectations, so each expectation
//! (signal correlation, signal-power second moment, per-interferer cross
//! moments, estimator norm, EMI quadratic form) is estimated term by term and
//! the ratio is assembled afterwards — never by averaging per-trial SINRs.
//!
//! Trials are independent work units seeded by `(seed, trial)` counters, and
//! the reduction over trials is a deterministic pairwise sum, so serial and
//! parallel execution produce bitwise identical results.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, ChannelError};
use crate::config::{PhaseShifts, SystemConfig};
use crate::estimation::{self, hadamard_sandwich, EstimationError};
use crate::rate::RateError;

/// Errors from the Monte Carlo stage.
#[derive(Debug, Error)]
pub enum McError {
    #[error("insufficient trials: got {got}, need at least {needed}")]
    InsufficientTrials { got: usize, needed: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// A sample-mean estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Minimum trial count for SINR estimation.
const MIN_SINR_TRIALS: usize = 1_000;
/// Minimum trial count for the moment-identity suite.
const MIN_MOMENT_TRIALS: usize = 10_000;

/// Deterministic pairwise sum of equal-length vectors: the reduction tree
/// depends only on the number of summands, never on scheduling.
fn pairwise_sum(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        n => {
            let (a, b) = rows.split_at(n / 2);
            let mut left = pairwise_sum(a);
            let right = pairwise_sum(b);
            for (l, r) in left.iter_mut().zip(right.iter()) {
                *l += r;
            }
            left
        }
    }
}

/// Layout of one trial's per-user statistics inside the flat stats vector.
struct StatsLayout {
    users: usize,
}

impl StatsLayout {
    fn stride(&self) -> usize {
        // re(s), im(s), |s|², K cross moments, ‖q̂‖², EMI quadratic form.
        self.users + 5
    }
    fn len(&self) -> usize {
        self.users * self.stride()
    }
    fn s_re(&self, k: usize) -> usize {
        k * self.stride()
    }
    fn s_im(&self, k: usize) -> usize {
        k * self.stride() + 1
    }
    fn s_abs2(&self, k: usize) -> usize {
        k * self.stride() + 2
    }
    fn cross(&self, k: usize, i: usize) -> usize {
        k * self.stride() + 3 + i
    }
    fn norm(&self, k: usize) -> usize {
        k * self.stride() + 3 + self.users
    }
    fn emi(&self, k: usize) -> usize {
        k * self.stride() + 4 + self.users
    }
}

/// Phase-dependent deterministic precomputation shared by all trials.
struct TrialFixture {
    lmmse: Option<crate::estimation::LmmseModel>,
    upsilon: Option<crate::estimation::UpsilonModel>,
    /// Deterministic estimate means `√(ĉδ)·H̄₂Φh̄_k` (correlated model).
    means: Vec<DVector<Complex64>>,
    /// `Φ R_emi Φ^H` (correlated model).
    phi_remi: Option<DMatrix<Complex64>>,
}

fn build_fixture(config: &SystemConfig, phase: &PhaseShifts) -> Result<TrialFixture, McError> {
    if config.correlated {
        let ups = estimation::upsilon_model(config, phase)?;
        let a_m = channel::bs_los_response(config)?;
        let a_n = channel::ris_departure_response(config)?;
        let means = (0..config.k)
            .map(|k| {
                let hbar_k = channel::user_los_response(config, k)?;
                let dir = a_n.dotc(&phase.apply(&hbar_k));
                Ok(&a_m * (dir * Complex64::new(config.cascaded_power(k).los_los.sqrt(), 0.0)))
            })
            .collect::<Result<Vec<_>, McError>>()?;
        let corr = channel::sinc_correlation(config.n, config.d_ris_over_lambda)?;
        let r_emi = corr.r_emi.map(|x| Complex64::new(x, 0.0));
        Ok(TrialFixture {
            lmmse: None,
            upsilon: Some(ups),
            means,
            phi_remi: Some(hadamard_sandwich(&r_emi, phase)),
        })
    } else {
        Ok(TrialFixture {
            lmmse: Some(estimation::lmmse_model(config, phase)?),
            upsilon: None,
            means: Vec::new(),
            phi_remi: None,
        })
    }
}

fn run_trial(
    config: &SystemConfig,
    phase: &PhaseShifts,
    fixture: &TrialFixture,
    seed: u64,
    trial: u64,
    layout: &StatsLayout,
) -> Result<Vec<f64>, McError> {
    let real = channel::sample_channels_trial(config, seed, trial)?;
    let q = channel::aggregated_channel(&real, config, phase)?;
    let obs = estimation::pilot_observation(&real, config, phase, seed)?;

    let q_hat: Vec<DVector<Complex64>> = if let Some(ups) = &fixture.upsilon {
        (0..config.k)
            .map(|k| &fixture.means[k] + &ups.users[k].upsilon * (&obs[k] - &fixture.means[k]))
            .collect()
    } else {
        let lmmse = fixture.lmmse.as_ref().expect("independent fixture holds an LMMSE model");
        (0..config.k)
            .map(|k| &lmmse.users[k].a_mat * &obs[k] + &lmmse.users[k].b_vec)
            .collect()
    };

    let mut stats = vec![0.0; layout.len()];
    let emi_core: Option<DMatrix<Complex64>> = fixture.phi_remi.as_ref().map(|pr| {
        let h2 = real.ris_bs_channel(config);
        &h2 * pr * h2.adjoint()
    });
    for k in 0..config.k {
        let s = q_hat[k].dotc(&q[k]);
        stats[layout.s_re(k)] = s.re;
        stats[layout.s_im(k)] = s.im;
        stats[layout.s_abs2(k)] = s.norm_sqr();
        for i in 0..config.k {
            if i != k {
                stats[layout.cross(k, i)] = q_hat[k].dotc(&q[i]).norm_sqr();
            }
        }
        stats[layout.norm(k)] = q_hat[k].norm_squared();
        if let Some(core) = &emi_core {
            stats[layout.emi(k)] = (q_hat[k].adjoint() * core * &q_hat[k])[(0, 0)].re;
        }
    }
    Ok(stats)
}

/// Per-trial statistics with their squares, reduced pairwise.
fn collect_stats(
    config: &SystemConfig,
    phase: &PhaseShifts,
    trials: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, StatsLayout), McError> {
    let layout = StatsLayout { users: config.k };
    let fixture = build_fixture(config, phase)?;
    let rows: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, phase, &fixture, seed, t, &layout))
        .collect::<Result<_, _>>()?;
    let sums = pairwise_sum(&rows);
    let squares: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x * x).collect())
        .collect();
    let sum_sq = pairwise_sum(&squares);
    Ok((sums, sum_sq, layout))
}

fn stderr_of(sum: f64, sum_sq: f64, t: f64) -> f64 {
    let var = ((sum_sq - sum * sum / t) / (t - 1.0)).max(0.0);
    (var / t).sqrt()
}

/// Effective per-user SINR estimated term by term over fresh channel,
/// pilot-noise and EMI draws, assembled as the ratio of expectations.
pub fn uatf_sinr_mc(
    config: &SystemConfig,
    phase: &PhaseShifts,
    trials: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, McError> {
    if trials < MIN_SINR_TRIALS {
        return Err(McError::InsufficientTrials { got: trials, needed: MIN_SINR_TRIALS });
    }
    let (sums, sum_sq, layout) = collect_stats(config, phase, trials, seed)?;
    let t = trials as f64;
    let p = config.p;
    Ok((0..config.k)
        .map(|k| {
            let mean_s = Complex64::new(sums[layout.s_re(k)] / t, sums[layout.s_im(k)] / t);
            let signal = mean_s.norm_sqr();
            let leak = sums[layout.s_abs2(k)] / t - signal;
            let inter: f64 = (0..config.k)
                .filter(|&i| i != k)
                .map(|i| sums[layout.cross(k, i)] / t)
                .sum();
            let noise = sums[layout.norm(k)] / t;
            let emi = sums[layout.emi(k)] / t;
            let num = p * signal;
            let den = p * leak + p * inter + config.sigma_e2 * emi + config.sigma2 * noise;
            let sinr = if den > 0.0 { num / den } else { 0.0 };

            // First-order error propagation through the ratio, treating the
            // term estimates as independent (reporting only).
            let se_s = (stderr_of(sums[layout.s_re(k)], sum_sq[layout.s_re(k)], t).powi(2)
                + stderr_of(sums[layout.s_im(k)], sum_sq[layout.s_im(k)], t).powi(2))
            .sqrt();
            let se_signal = 2.0 * mean_s.norm() * se_s;
            let se_abs2 = stderr_of(sums[layout.s_abs2(k)], sum_sq[layout.s_abs2(k)], t);
            let se_inter_sq: f64 = (0..config.k)
                .filter(|&i| i != k)
                .map(|i| {
                    let idx = layout.cross(k, i);
                    (p * stderr_of(sums[idx], sum_sq[idx], t)).powi(2)
                })
                .sum();
            let se_noise = stderr_of(sums[layout.norm(k)], sum_sq[layout.norm(k)], t);
            let se_emi = stderr_of(sums[layout.emi(k)], sum_sq[layout.emi(k)], t);
            let se_den = ((p * se_abs2).powi(2)
                + (p * se_signal).powi(2)
                + se_inter_sq
                + (config.sigma_e2 * se_emi).powi(2)
                + (config.sigma2 * se_noise).powi(2))
            .sqrt();
            let stderr = if num > 0.0 && den > 0.0 {
                sinr * ((p * se_signal / num).powi(2) + (se_den / den).powi(2)).sqrt()
            } else {
                0.0
            };
            McEstimate { mean: sinr, stderr, trials, seed }
        })
        .collect())
}

/// One user's Monte Carlo rate with a delta-method confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMcReport {
    pub rate: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub sinr: McEstimate,
}

/// Wraps [`uatf_sinr_mc`] into achievable rates with the payload prelog.
pub fn rate_mc_report(
    config: &SystemConfig,
    phase: &PhaseShifts,
    trials: usize,
    seed: u64,
) -> Result<Vec<RateMcReport>, McError> {
    let prelog = config.prelog();
    Ok(uatf_sinr_mc(config, phase, trials, seed)?
        .into_iter()
        .map(|est| {
            let rate = prelog * (1.0 + est.mean).log2();
            let slope = prelog / ((1.0 + est.mean) * std::f64::consts::LN_2);
            let stderr = slope * est.stderr;
            RateMcReport {
                rate,
                stderr,
                ci95_low: rate - 1.96 * stderr,
                ci95_high: rate + 1.96 * stderr,
                sinr: est,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Moment-identity suite
// ---------------------------------------------------------------------------

/// Outcome of one sampled moment identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// Frobenius norm of (sample mean − analytic value).
    pub deviation: f64,
    /// Five standard errors (Frobenius-aggregated).
    pub tolerance: f64,
    /// Deviation relative to the analytic value's norm.
    pub rel_error: f64,
    pub pass: bool,
}

/// Pass/fail report of the Gaussian moment identities underlying the
/// closed-form derivations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub checks: Vec<IdentityCheck>,
}

impl MomentReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// RNG block housing the fixed matrices of the moment suite.
const BLOCK_MOMENT_FIXED: u64 = 699;
/// RNG block housing the per-trial Gaussian draws of the moment suite.
const BLOCK_MOMENT_DRAW: u64 = 700;

/// Accumulates complex-matrix sample means with entrywise standard errors.
struct MatrixMoment {
    sum: DMatrix<Complex64>,
    sum_sq: DMatrix<f64>,
    trials: f64,
}

impl MatrixMoment {
    fn new(rows: usize, cols: usize) -> Self {
        MatrixMoment {
            sum: DMatrix::zeros(rows, cols),
            sum_sq: DMatrix::zeros(rows, cols),
            trials: 0.0,
        }
    }
    fn push(&mut self, x: &DMatrix<Complex64>) {
        self.sum += x;
        self.sum_sq += x.map(|v| v.norm_sqr());
        self.trials += 1.0;
    }
    fn check(&self, name: &'static str, analytic: &DMatrix<Complex64>) -> IdentityCheck {
        let t = self.trials;
        let mean = &self.sum / Complex64::new(t, 0.0);
        let dev = (&mean - analytic).norm();
        let se_sq: f64 = self
            .sum
            .iter()
            .zip(self.sum_sq.iter())
            .map(|(s, ss)| (((ss - s.norm_sqr() / t) / (t - 1.0)).max(0.0)) / t)
            .sum();
        let tolerance = 5.0 * se_sq.sqrt();
        let scale = analytic.norm();
        IdentityCheck {
            name,
            deviation: dev,
            tolerance,
            rel_error: if scale > 0.0 { dev / scale } else { dev },
            pass: dev <= tolerance,
        }
    }
}

fn random_hermitian(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    let g = channel::draw_cn_matrix(rng, n, n, 1.0);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Samples the Gaussian moment identities used as derivation oracles:
///
/// 1. `E{X W X^H} = Tr{W}·I`  (X with i.i.d. unit-variance entries)
/// 2. `E{X W X} = 0`          (no-conjugate second moment)
/// 3. `E{X^H C X W X^H C X} = Tr{W}Tr{C²}·I + |Tr{C}|²·W`
/// 4. `E{u u^H C u u^H} = C + Tr{C}·I`
/// 5. `E{‖u‖⁴} = M² + M`
pub fn moment_identity_suite(
    config: &SystemConfig,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, McError> {
    if trials < MIN_MOMENT_TRIALS {
        return Err(McError::InsufficientTrials { got: trials, needed: MIN_MOMENT_TRIALS });
    }
    let (m, n) = (config.m, config.n);
    let mut fixed_rng = channel::block_rng(seed, 0, BLOCK_MOMENT_FIXED);
    let w = random_hermitian(&mut fixed_rng, n);
    let c = random_hermitian(&mut fixed_rng, m);

    let mut quad = MatrixMoment::new(m, m);
    let mut noconj = MatrixMoment::new(m, n.min(m));
    let mut sandwich = MatrixMoment::new(n, n);
    let mut wishart = MatrixMoment::new(m, m);
    let mut norm4 = MatrixMoment::new(1, 1);

    for t in 0..trials as u64 {
        let mut rng = channel::block_rng(seed, t, BLOCK_MOMENT_DRAW);
        let x = channel::draw_cn_matrix(&mut rng, m, n, 1.0);
        let u = channel::draw_cn_vector(&mut rng, m, 1.0);

        quad.push(&(&x * &w * x.adjoint()));
        // X W X is m×n·n×n·m×n — shapes only align for square X, so sample
        // the no-conjugate identity on the leading square block.
        let sq = n.min(m);
        let xs = x.view((0, 0), (sq, sq)).into_owned();
        let ws = w.view((0, 0), (sq, sq)).into_owned();
        noconj.push(&(&xs * &ws * &xs));
        sandwich.push(&(x.adjoint() * &c * &x * &w * x.adjoint() * &c * &x));
        let uuh = &u * u.adjoint();
        wishart.push(&(&uuh * &c * &uuh));
        let nrm = u.norm_squared();
        norm4.push(&DMatrix::from_element(1, 1, Complex64::new(nrm * nrm, 0.0)));
    }

    let eye_m = DMatrix::<Complex64>::identity(m, m);
    let eye_n = DMatrix::<Complex64>::identity(n, n);
    let tr_w = w.trace();
    let tr_c = c.trace();
    let tr_c2 = (&c * &c).trace();
    let mf = m as f64;
    let checks = vec![
        quad.check("E{XWX^H} = Tr{W} I", &(&eye_m * tr_w)),
        noconj.check(
            "E{XWX} = 0",
            &DMatrix::zeros(n.min(m), n.min(m)),
        ),
        sandwich.check(
            "E{X^H C X W X^H C X} = Tr{W}Tr{C^2} I + |Tr{C}|^2 W",
            &(&eye_n * (tr_w * tr_c2) + &w * Complex64::new(tr_c.norm_sqr(), 0.0)),
        ),
        wishart.check("E{uu^H C uu^H} = C + Tr{C} I", &(&c + &eye_m * tr_c)),
        norm4.check(
            "E{|u|^4} = M^2 + M",
            &DMatrix::from_element(1, 1, Complex64::new(mf * mf + mf, 0.0)),
        ),
    ];
    Ok(MomentReport { checks })
}
