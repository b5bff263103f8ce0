//! Phase-shift design from statistical CSI.
//!
//! The multi-user objective is the smooth min-rate surrogate
//! `f(θ) = −(1/μ)·ln Σ_k exp{−μ·R_k(θ)}`, maximized by backtracking gradient
//! ascent with the Armijo condition; the objective is 2π-periodic per
//! coordinate so no projection step exists. Gradients are fully analytic for
//! both rate engines: every phase dependence enters through quadratic forms
//! `Tr{A Φ B Φ^H}` (differentiated by [`grad_quadratic_form`]) or through the
//! estimator matrix `Υ_k(θ)` (differentiated by [`grad_trace_upsilon`]), and
//! each closed-form rate component is differentiated by the product rule over
//! those primitives so every sub-term can be unit-tested against finite
//! differences in isolation.
//!
//! Single-user systems additionally admit a closed-form endpoint rule: the
//! SNR is a rational function of `x = |f(Φ)|² ∈ [0, N²]` whose maximizer is
//! always one of the endpoints, realized exactly by the phase-alignment and
//! phase-cancellation constructions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{CsiMode, PhaseShifts, SystemConfig};
use crate::rate::{
    self, CorrContext, IndepCtx, IndependentGradientCoefficients, RateError,
};

/// Errors from the optimizer.
#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("dimension mismatch: {what} is {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
    #[error("wrong regime: {reason}")]
    WrongRegime { reason: &'static str },
    #[error("infeasible request: {reason}")]
    Infeasible { reason: &'static str },
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
}

/// Hyperparameters of the backtracking gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Sharpness of the log-sum-exp min-rate surrogate.
    pub mu: f64,
    /// Armijo sufficient-increase constant.
    pub kappa_b: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
    /// Stop when the objective improves by less than this.
    pub conv_tol: f64,
    /// Outer-iteration cap.
    pub max_outer: usize,
    /// Backtracking-step cap per outer iteration.
    pub max_backtrack: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mu: 100.0,
            kappa_b: 0.5,
            shrink: 0.8,
            conv_tol: 1e-5,
            max_outer: 500,
            max_backtrack: 60,
        }
    }
}

/// Smooth lower bound on the minimum rate:
/// `−(1/μ)·ln Σ exp{−μ·r_k}`, within `ln(K)/μ` of `min_k r_k`. Computed with
/// a max-shift so extreme `μ·r` products cannot underflow.
pub fn logsumexp_objective(rates: &[f64], mu: f64) -> f64 {
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = rates.iter().map(|&r| (-mu * (r - min)).exp()).sum();
    min - sum.ln() / mu
}

/// Softmin weights `exp{−μ r_k}/Σ exp{−μ r_j}` of the surrogate gradient.
fn softmin_weights(rates: &[f64], mu: f64) -> Vec<f64> {
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let unnorm: Vec<f64> = rates.iter().map(|&r| (-mu * (r - min)).exp()).collect();
    let sum: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|w| w / sum).collect()
}

// ---------------------------------------------------------------------------
// Gradient primitives
// ---------------------------------------------------------------------------

/// `y_n = Σ_m A[n,m]·B[m,n]·x[m]` — the matrix-vector product with the
/// Hadamard product `A ∘ B^T` without materializing it.
fn had_ab_x(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, x: &DVector<Complex64>) -> DVector<Complex64> {
    let n = x.len();
    DVector::from_fn(n, |r, _| (0..n).map(|m| a[(r, m)] * b[(m, r)] * x[m]).sum())
}

/// Gradient of the quadratic form `Tr{A Φ B Φ^H}` with respect to θ:
/// `j·Φ^T (A^T ∘ B) c* − j·Φ^H (A ∘ B^T) c`. Complex in general; real when
/// both matrices are Hermitian (then use [`grad_quadratic_form_hermitian`]).
pub fn grad_quadratic_form(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    theta: &PhaseShifts,
) -> Result<DVector<Complex64>, OptimizerError> {
    let n = theta.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(OptimizerError::DimensionMismatch { what: "matrix A", got: a.nrows(), expected: n });
    }
    if b.nrows() != n || b.ncols() != n {
        return Err(OptimizerError::DimensionMismatch { what: "matrix B", got: b.nrows(), expected: n });
    }
    let c = theta.unit_diagonal();
    let c_conj = c.map(|v| v.conj());
    let first = had_ab_x(b, a, &c_conj);
    let second = had_ab_x(a, b, &c);
    let j = Complex64::new(0.0, 1.0);
    Ok(DVector::from_fn(n, |i, _| j * c[i] * first[i] - j * c_conj[i] * second[i]))
}

/// Hermitian shortcut for [`grad_quadratic_form`]: `2·Im{Φ^H (A ∘ B^T) c}`.
pub fn grad_quadratic_form_hermitian(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    theta: &PhaseShifts,
) -> Result<DVector<f64>, OptimizerError> {
    let n = theta.len();
    if a.nrows() != n || a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(OptimizerError::DimensionMismatch {
            what: "quadratic-form matrices",
            got: a.nrows().max(b.nrows()),
            expected: n,
        });
    }
    let c = theta.unit_diagonal();
    let v = had_ab_x(a, b, &c);
    Ok(DVector::from_fn(n, |i, _| 2.0 * (c[i].conj() * v[i]).im))
}

/// Phase-independent gradient primitives of the correlated model shared by
/// all users at a fixed phase vector.
struct CorrGradShared {
    /// `∂ Tr{R_ris Φ R_emi Φ^H} / ∂θ`.
    d1: DVector<f64>,
    /// `∂ (a_N^H Φ R_emi Φ^H a_N) / ∂θ`.
    d_emi_los: DVector<f64>,
    /// Rank-one LoS direction `a_N a_N^H`.
    g_n: DMatrix<Complex64>,
    /// `Φ R_emi Φ^H` (copied from the context).
    p: DMatrix<Complex64>,
}

impl CorrGradShared {
    fn new(ctx: &CorrContext, theta: &PhaseShifts) -> Result<Self, OptimizerError> {
        let g_n = &ctx.a_n * ctx.a_n.adjoint();
        Ok(CorrGradShared {
            d1: grad_quadratic_form_hermitian(&ctx.r_ris, &ctx.r_emi, theta)?,
            d_emi_los: grad_quadratic_form_hermitian(&g_n, &ctx.r_emi, theta)?,
            g_n,
            p: ctx.phi_remi.clone(),
        })
    }
}

/// `z_k(T) = ∂ Tr{T Υ_k(θ)} / ∂θ` for a fixed matrix `T`, via the estimator's
/// factorization `Υ = ψ·W` with `W` the inner inverse: the chain runs through
/// `ψ`, through the pilot-EMI coupling `Tr{R_ris Φ R_emi Φ^H}` and through
/// the LoS EMI power `a_N^H Φ R_emi Φ^H a_N`.
fn z_k_with(
    ctx: &CorrContext,
    shared: &CorrGradShared,
    d2_k: &DVector<f64>,
    k: usize,
    t: &DMatrix<Complex64>,
) -> DVector<Complex64> {
    let w = &ctx.ups[k].upsilon_inner;
    let psi = ctx.ups[k].psi1;
    let chat = ctx.chat[k];
    let tw = (t * w).trace();
    let tww = (t * w * w).trace();
    let a = &ctx.a_m;
    let s3 = (a.adjoint() * w * t * w * a)[(0, 0)];
    let c_psi = chat * (tw - psi * tww);
    let c_f1 = -ctx.emi_gain * psi * tww;
    let c_los = -ctx.emi_gain * ctx.delta * psi * s3;
    DVector::from_fn(ctx.a_n.len(), |i, _| {
        c_psi * d2_k[i] + c_f1 * shared.d1[i] + c_los * shared.d_emi_los[i]
    })
}

/// Public wrapper: gradient of `Tr{T Υ_k(θ)}` for user `k`. Real for the
/// Hermitian sandwiches used by the rate terms, complex in general.
pub fn grad_trace_upsilon(
    t: &DMatrix<Complex64>,
    theta: &PhaseShifts,
    config: &SystemConfig,
    k: usize,
) -> Result<DVector<Complex64>, OptimizerError> {
    let ctx = CorrContext::new(config, theta)?;
    if t.nrows() != config.m || t.ncols() != config.m {
        return Err(OptimizerError::DimensionMismatch { what: "matrix T", got: t.nrows(), expected: config.m });
    }
    let shared = CorrGradShared::new(&ctx, theta)?;
    let hbar_sq = &ctx.hbar[k] * ctx.hbar[k].adjoint();
    let d2_k = grad_quadratic_form_hermitian(&ctx.r_ris, &hbar_sq, theta)?;
    Ok(z_k_with(&ctx, &shared, &d2_k, k, t))
}

/// Per-user gradient primitives of the correlated model.
struct CorrGradUser {
    /// `∂f2/∂θ` — user LoS power through the RIS correlation.
    d2: DVector<f64>,
    /// `∂|f_k|²/∂θ`.
    d7: DVector<f64>,
    /// `∂f6/∂θ`.
    d6: DVector<f64>,
    /// `∂Tr{Υ}/∂θ`.
    z_eye: DVector<f64>,
    /// `∂Tr{Υ²}/∂θ` (= 2·z(Υ)).
    d_tr_u2: DVector<f64>,
    /// `∂(a^H Υ a)/∂θ`.
    z_a: DVector<f64>,
    /// `∂(a^H Υ² a)/∂θ`.
    d_t2: DVector<f64>,
    /// `∂f_k/∂θ` per coordinate (complex).
    df: DVector<Complex64>,
    /// EMI–RIS cross scalar `μ_k = a_N^H Φ R_emi Φ^H R_ris Φ h̄_k`.
    mu: Complex64,
    /// `∂μ_k/∂θ` (complex).
    dmu: DVector<Complex64>,
}

fn real_part(v: DVector<Complex64>) -> DVector<f64> {
    v.map(|x| x.re)
}

fn corr_grad_user(
    ctx: &CorrContext,
    shared: &CorrGradShared,
    theta: &PhaseShifts,
    k: usize,
) -> Result<CorrGradUser, OptimizerError> {
    let hbar_sq = &ctx.hbar[k] * ctx.hbar[k].adjoint();
    let d2 = grad_quadratic_form_hermitian(&ctx.r_ris, &hbar_sq, theta)?;
    let d7 = grad_quadratic_form_hermitian(&shared.g_n, &hbar_sq, theta)?;

    // f6 = v^H (Φ R_emi Φ^H) v with v = R_ris Φ h̄: one product-rule term per
    // appearance of Φ, each a Hermitian quadratic-form gradient.
    let v = &ctx.r_ris * &ctx.phik[k];
    let vvh = &v * v.adjoint();
    let rpr = &ctx.r_ris * &shared.p * &ctx.r_ris;
    let d6 = grad_quadratic_form_hermitian(&vvh, &ctx.r_emi, theta)?
        + grad_quadratic_form_hermitian(&rpr, &hbar_sq, theta)?;

    let m_dim = ctx.a_m.len();
    let eye = DMatrix::<Complex64>::identity(m_dim, m_dim);
    let aah = &ctx.a_m * ctx.a_m.adjoint();
    let ups = &ctx.ups[k].upsilon;
    let z_eye = real_part(z_k_with(ctx, shared, &d2, k, &eye));
    let d_tr_u2 = real_part(z_k_with(ctx, shared, &d2, k, ups)) * 2.0;
    let z_a = real_part(z_k_with(ctx, shared, &d2, k, &aah));
    let d_t2 = real_part(z_k_with(ctx, shared, &d2, k, &(ups * &aah + &aah * ups)));

    let c = theta.unit_diagonal();
    let j = Complex64::new(0.0, 1.0);
    let df = DVector::from_fn(ctx.a_n.len(), |i, _| {
        j * ctx.a_n[i].conj() * c[i] * ctx.hbar[k][i]
    });

    // μ_k = Tr{(Φ R_emi Φ^H)·(v a_N^H)} plus the explicit Φ in v = R_ris Φ h̄.
    let mu = ctx.emi_ris_cross(k);
    let va = &v * ctx.a_n.adjoint();
    let dmu_p = grad_quadratic_form(&va, &ctx.r_emi, theta)?;
    // Row vector r = a_N^H P R_ris: the v-side product-rule term is
    // j·c_n·h̄_n·r_n.
    let r = (ctx.a_n.adjoint() * &shared.p * &ctx.r_ris).transpose();
    let dmu = DVector::from_fn(ctx.a_n.len(), |i, _| {
        dmu_p[i] + j * c[i] * ctx.hbar[k][i] * r[i]
    });

    Ok(CorrGradUser { d2, d7, d6, z_eye, d_tr_u2, z_a, d_t2, df, mu, dmu })
}

/// Gradient of one user's correlated-model SINR terms.
struct CorrUserGrad {
    d_noise: DVector<f64>,
    d_leak: DVector<f64>,
    d_inter: DVector<f64>,
    d_emi: DVector<f64>,
}

#[allow(clippy::too_many_lines)]
fn corr_sinr_term_grads(
    ctx: &CorrContext,
    shared: &CorrGradShared,
    users: &[CorrGradUser],
    theta: &PhaseShifts,
    k: usize,
) -> Result<CorrUserGrad, OptimizerError> {
    let n = ctx.a_n.len();
    let u = &users[k];
    let (m, delta, sn, eg) = (ctx.m, ctx.delta, ctx.noise, ctx.emi_gain);
    let (chat, g) = (ctx.chat[k], ctx.gamma[k]);
    let f1 = ctx.f_c1;
    let f2 = ctx.f2(k);
    let f4 = ctx.tr_u2[k];
    let tr_u = ctx.tr_u[k];
    let f5 = tr_u * tr_u;
    let f6 = ctx.f6(k);
    let f7 = ctx.f[k].norm_sqr();
    let (t1, t2) = (ctx.t1[k], ctx.t2[k]);
    let emi_los = ctx.emi_los;
    let f3 = emi_los * t2;
    let f8kk = f7 * t2;
    let fk = ctx.f[k];

    let d_f3 = &shared.d_emi_los * t2 + &u.d_t2 * emi_los;
    let d_f5 = &u.z_eye * (2.0 * tr_u);
    let d_f8kk = &u.d7 * t2 + &u.d_t2 * f7;
    // f9_kk = f7 · emi_los · t1².
    let d_f9kk = &u.d7 * (emi_los * t1 * t1)
        + &shared.d_emi_los * (f7 * t1 * t1)
        + &u.z_a * (2.0 * f7 * emi_los * t1);

    let d_noise = &u.d7 * (m * chat * delta)
        + &u.z_eye * (chat * f2 + g)
        + &u.d2 * (chat * tr_u);

    // Re{f_k^* μ_k} and its gradient (shared by one EMI and one leak term).
    let fmu = (fk.conj() * u.mu).re;
    let d_fmu = DVector::from_fn(n, |i, _| (u.df[i].conj() * u.mu + fk.conj() * u.dmu[i]).re);

    // --- EMI components. ---
    let mut d_emi = DVector::<f64>::zeros(n);
    // E1 = M²ĉδ²·f7·emi_los.
    d_emi += (&u.d7 * emi_los + &shared.d_emi_los * f7) * (m * m * chat * delta * delta);
    // E2 = (ĉδf2 + 2δ·eg·f1 + δ(γ+sn))·f3.
    let e2c = chat * delta * f2 + 2.0 * delta * eg * f1 + delta * (g + sn);
    d_emi += (&u.d2 * (chat * delta) + &shared.d1 * (2.0 * delta * eg)) * f3 + &d_f3 * e2c;
    // E3 = (Mĉδf7 + (sn+γ+ĉf2+eg·f1)·f4)·f1.
    let e3b = m * chat * delta * f7 + (sn + g + chat * f2 + eg * f1) * f4;
    d_emi += (&u.d7 * (m * chat * delta)
        + (&u.d2 * chat + &shared.d1 * eg) * f4
        + &u.d_tr_u2 * (sn + g + chat * f2 + eg * f1))
        * f1
        + &shared.d1 * e3b;
    // E4 = δ²·eg·t1²·emi_los².
    d_emi += (&u.z_a * (2.0 * t1 * emi_los * emi_los)
        + &shared.d_emi_los * (2.0 * t1 * t1 * emi_los))
        * (delta * delta * eg);
    // E5 = 2ĉδ·M·Tr{Υ}·Re{f_k^* μ_k}.
    d_emi += (&u.z_eye * fmu + &d_fmu * tr_u) * (2.0 * chat * delta * m);
    // E6 = 2δ·eg·Tr{Υ}·t1·dec, dec = x^H R_ris x with x = Φ R_emi Φ^H a_N.
    let dec = ctx.double_emi_coupling();
    let s_dec = &ctx.r_ris * &shared.p * &shared.g_n + &shared.g_n * &shared.p * &ctx.r_ris;
    let d_dec = grad_quadratic_form_hermitian(&s_dec, &ctx.r_emi, theta)?;
    d_emi += (&u.z_eye * (t1 * dec) + &u.z_a * (tr_u * dec) + &d_dec * (tr_u * t1))
        * (2.0 * delta * eg);
    // E7 = ĉ·f5·f6.
    d_emi += (&d_f5 * f6 + &u.d6 * f5) * chat;
    // E8 = eg·f5·Tr{(R_ris Φ R_emi Φ^H)²}.
    let rst = ctx.ris_emi_square_trace();
    let s_rst = (&ctx.r_ris * &shared.p * &ctx.r_ris) * Complex64::new(2.0, 0.0);
    let d_rst = grad_quadratic_form_hermitian(&s_rst, &ctx.r_emi, theta)?;
    d_emi += (&d_f5 * rst + &d_rst * f5) * eg;
    d_emi *= ctx.beta_nlos;

    // --- Leak components. ---
    let mut d_leak = DVector::<f64>::zeros(n);
    // L1 = Mĉδγ·f7.
    d_leak += &u.d7 * (m * chat * delta * g);
    // L2 = (Mĉ²δf7 + ĉ²δ·f8kk + (ĉ²f2 + 2ĉγ + ĉsn)·f4)·f2.
    let l2b = m * chat * chat * delta * f7
        + chat * chat * delta * f8kk
        + (chat * chat * f2 + 2.0 * chat * g + chat * sn) * f4;
    d_leak += (&u.d7 * (m * chat * chat * delta)
        + &d_f8kk * (chat * chat * delta)
        + &u.d2 * (chat * chat * f4)
        + &u.d_tr_u2 * (chat * chat * f2 + 2.0 * chat * g + chat * sn))
        * f2
        + &u.d2 * l2b;
    // L3 = ĉδ·(γ + eg·f1 + sn)·f8kk.
    d_leak += (&shared.d1 * (chat * delta * eg * f8kk))
        + &d_f8kk * (chat * delta * (g + eg * f1 + sn));
    // L4 = (γ² + γ·sn + eg·(γ + ĉf2)·f1)·f4.
    d_leak += (&u.d2 * (eg * chat * f1) + &shared.d1 * (eg * (g + chat * f2))) * f4
        + &u.d_tr_u2 * (g * g + g * sn + eg * (g + chat * f2) * f1);
    // L5 = ĉδ²·eg·f9kk.
    d_leak += &d_f9kk * (chat * delta * delta * eg);
    // L6 = 2ĉδ·eg·Tr{Υ}·t1·Re{f_k^* μ_k}.
    d_leak += ((&u.z_eye * t1 + &u.z_a * tr_u) * fmu + &d_fmu * (tr_u * t1))
        * (2.0 * chat * delta * eg);
    // L7 = δ·eg·(γ + ĉf2)·f3.
    d_leak += (&u.d2 * (chat * f3) + &d_f3 * (g + chat * f2)) * (delta * eg);
    // L8 = ĉ·eg·f5·f6.
    d_leak += (&d_f5 * f6 + &u.d6 * f5) * (chat * eg);

    // --- Interference components. ---
    let mut d_inter = DVector::<f64>::zeros(n);
    for i in 0..ctx.k {
        if i == k {
            continue;
        }
        let ui = &users[i];
        let chi = ctx.chat[i];
        let gi = ctx.gamma[i];
        let f2i = ctx.f2(i);
        let f7i = ctx.f[i].norm_sqr();
        let f6i = ctx.f6(i);
        let f8i = f7i * t2;
        let fi = ctx.f[i];
        let d_f8i = &ui.d7 * t2 + &u.d_t2 * f7i;
        let d_f9i = &ui.d7 * (emi_los * t1 * t1)
            + &shared.d_emi_los * (f7i * t1 * t1)
            + &u.z_a * (2.0 * f7i * emi_los * t1);

        // I1 = γ_i·E_noise + M²ĉĉ_iδ²·f7·f7i.
        d_inter += &d_noise * gi
            + (&u.d7 * f7i + &ui.d7 * f7) * (m * m * chat * chi * delta * delta);
        // I2 = (Mĉĉ_iδf7 + ĉ_i(γ+sn+eg·f1)·f4 + ĉ_iδ·eg·f3)·f2i.
        let i2b = m * chat * chi * delta * f7 + chi * (g + sn + eg * f1) * f4
            + chi * delta * eg * f3;
        d_inter += (&u.d7 * (m * chat * chi * delta)
            + &shared.d1 * (chi * eg * f4)
            + &u.d_tr_u2 * (chi * (g + sn + eg * f1))
            + &d_f3 * (chi * delta * eg))
            * f2i
            + &ui.d2 * i2b;
        // I3 = (ĉĉ_iδ·f8i + ĉĉ_i·f4·f2i)·f2.
        let i3b = chat * chi * delta * f8i + chat * chi * f4 * f2i;
        d_inter += (&d_f8i * (chat * chi * delta)
            + (&u.d_tr_u2 * f2i + &ui.d2 * f4) * (chat * chi))
            * f2
            + &u.d2 * i3b;
        // I4 = ĉ_iδ·(eg·f1 + γ + sn)·f8i.
        d_inter += &shared.d1 * (chi * delta * eg * f8i)
            + &d_f8i * (chi * delta * (eg * f1 + g + sn));
        // I5 = (ĉĉ_i·|h̄_k^HΦ^H R_ris Φh̄_i|² + ĉ_i·eg·f6i)·f5.
        let ris_ki = (ctx.phik[k].adjoint() * &ctx.r_ris * &ctx.phik[i])[(0, 0)];
        let hki = &ctx.hbar[i] * ctx.hbar[k].adjoint();
        let d_ris_ki = grad_quadratic_form(&ctx.r_ris, &hki, theta)?;
        let d_ris_ki2 =
            DVector::from_fn(n, |x, _| 2.0 * (ris_ki.conj() * d_ris_ki[x]).re);
        let i5b = chat * chi * ris_ki.norm_sqr() + chi * eg * f6i;
        d_inter += (&d_ris_ki2 * (chat * chi) + &ui.d6 * (chi * eg)) * f5 + &d_f5 * i5b;
        // I6 = 2ĉĉ_iδ·M·Tr{Υ}·Re{f_k^* f_i · ris_ki^*}.
        let d_fkfi = grad_quadratic_form(&shared.g_n, &hki, theta)?;
        let cross6 = (fk.conj() * fi * ris_ki.conj()).re;
        let d_cross6 = DVector::from_fn(n, |x, _| {
            (d_fkfi[x] * ris_ki.conj() + fk.conj() * fi * d_ris_ki[x].conj()).re
        });
        d_inter += (&u.z_eye * cross6 + &d_cross6 * tr_u) * (2.0 * chat * chi * delta * m);
        // I7 = ĉ_iδ²·eg·f9i.
        d_inter += &d_f9i * (chi * delta * delta * eg);
        // I8 = 2ĉ_iδ·eg·Tr{Υ}·t1·Re{μ_i^* f_i}.
        let cross8 = (ui.mu.conj() * fi).re;
        let d_cross8 = DVector::from_fn(n, |x, _| {
            (ui.dmu[x].conj() * fi + ui.mu.conj() * ui.df[x]).re
        });
        d_inter += ((&u.z_eye * t1 + &u.z_a * tr_u) * cross8 + &d_cross8 * (tr_u * t1))
            * (2.0 * chi * delta * eg);
    }

    Ok(CorrUserGrad { d_noise, d_leak, d_inter, d_emi })
}

// ---------------------------------------------------------------------------
// Objective and its gradient
// ---------------------------------------------------------------------------

/// Per-user rates of the configured model.
fn model_rates(config: &SystemConfig, theta: &PhaseShifts) -> Result<Vec<f64>, RateError> {
    if config.correlated {
        Ok(rate::rate_correlated(config, theta)?.0.rates())
    } else {
        Ok(rate::rate_independent(config, theta)?.rates())
    }
}

/// Smooth min-rate surrogate of the configured model at `theta`.
pub fn objective(config: &SystemConfig, theta: &PhaseShifts, mu: f64) -> Result<f64, RateError> {
    Ok(logsumexp_objective(&model_rates(config, theta)?, mu))
}

/// Analytic gradient of the smooth min-rate surrogate.
pub fn grad_objective(
    theta: &PhaseShifts,
    config: &SystemConfig,
    mu: f64,
) -> Result<DVector<f64>, OptimizerError> {
    let n = config.n;
    let (rates, sinrs, d_sinrs) = if config.correlated {
        let ctx = CorrContext::new(config, theta)?;
        let shared = CorrGradShared::new(&ctx, theta)?;
        let users: Vec<CorrGradUser> = (0..ctx.k)
            .map(|k| corr_grad_user(&ctx, &shared, theta, k))
            .collect::<Result<_, _>>()?;
        let mut rates = Vec::with_capacity(ctx.k);
        let mut sinrs = Vec::with_capacity(ctx.k);
        let mut d_sinrs = Vec::with_capacity(ctx.k);
        for k in 0..ctx.k {
            let (user, _) = rate::correlated_user(&ctx, k);
            let g = corr_sinr_term_grads(&ctx, &shared, &users, theta, k)?;
            let noise = user.noise;
            let num = ctx.p * user.signal;
            let inter_sum: f64 = user.interference.iter().sum();
            let den = ctx.p * user.leak
                + ctx.p * inter_sum
                + ctx.sigma_e2 * user.emi.unwrap_or(0.0)
                + ctx.sigma2 * noise;
            let d_num = &g.d_noise * (ctx.p * 2.0 * noise);
            let d_den = &g.d_leak * ctx.p
                + &g.d_inter * ctx.p
                + &g.d_emi * ctx.sigma_e2
                + &g.d_noise * ctx.sigma2;
            let d_sinr = (d_num * den - d_den * num) / (den * den);
            rates.push(user.rate);
            sinrs.push(user.sinr);
            d_sinrs.push(d_sinr);
        }
        (rates, sinrs, d_sinrs)
    } else {
        let ctx = IndepCtx::new(config, theta, CsiMode::Estimated)?;
        let coeffs = IndependentGradientCoefficients::from_ctx(&ctx);
        let a_n = crate::channel::ris_departure_response(config)?;
        let g_n = &a_n * a_n.adjoint();
        let hbar: Vec<_> = (0..config.k)
            .map(|k| crate::channel::user_los_response(config, k))
            .collect::<Result<Vec<_>, _>>()?;
        // ∂|f_k|²/∂θ via the Hermitian quadratic-form gradient.
        let d_f2: Vec<DVector<f64>> = (0..ctx.k)
            .map(|k| {
                let hh = &hbar[k] * hbar[k].adjoint();
                grad_quadratic_form_hermitian(&g_n, &hh, theta)
            })
            .collect::<Result<_, _>>()?;
        let mut rates = Vec::with_capacity(ctx.k);
        let mut sinrs = Vec::with_capacity(ctx.k);
        let mut d_sinrs = Vec::with_capacity(ctx.k);
        for k in 0..ctx.k {
            let x = ctx.f[k].norm_sqr();
            let noise = ctx.noise_term(k, x);
            let leak = ctx.leak_term(k, x);
            let mut inter_sum = 0.0;
            let mut d_inter = DVector::<f64>::zeros(n);
            for i in 0..ctx.k {
                if i == k {
                    continue;
                }
                let y = ctx.f[i].norm_sqr();
                let fkfi = ctx.f[k].conj() * ctx.f[i];
                inter_sum += ctx.cross_term(k, i, x, y, fkfi);
                let hh = &hbar[i] * hbar[k].adjoint();
                let d_fkfi = grad_quadratic_form(&g_n, &hh, theta)?;
                d_inter += &d_f2[k] * (coeffs.cross_f4[k][i] * y + coeffs.cross_fk2[k][i])
                    + &d_f2[i] * (coeffs.cross_f4[k][i] * x + coeffs.cross_fi2[k][i])
                    + DVector::from_fn(n, |v, _| {
                        2.0 * (coeffs.cross_inner[k][i] * d_fkfi[v]).re
                    });
            }
            let num = ctx.p * noise * noise;
            let den = ctx.p * leak + ctx.p * inter_sum + ctx.sigma2 * noise;
            let d_noise = &d_f2[k] * coeffs.noise_f2[k];
            let d_num = &d_noise * (ctx.p * 2.0 * noise);
            let d_den = &d_f2[k] * (ctx.p * coeffs.leak_f2[k])
                + d_inter * ctx.p
                + &d_noise * ctx.sigma2;
            let sinr = if den > 0.0 { num / den } else { 0.0 };
            let d_sinr = if den > 0.0 {
                (d_num * den - d_den * num) / (den * den)
            } else {
                DVector::zeros(n)
            };
            rates.push(ctx.prelog * (1.0 + sinr).log2());
            sinrs.push(sinr);
            d_sinrs.push(d_sinr);
        }
        (rates, sinrs, d_sinrs)
    };

    let weights = softmin_weights(&rates, mu);
    let prelog = config.prelog();
    let mut grad = DVector::<f64>::zeros(n);
    for k in 0..rates.len() {
        let slope = prelog / ((1.0 + sinrs[k]) * std::f64::consts::LN_2);
        grad += &d_sinrs[k] * (weights[k] * slope);
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Gradient ascent
// ---------------------------------------------------------------------------

/// Why the ascent loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// Objective improvement fell below the tolerance.
    Converged,
    /// Outer-iteration cap reached.
    MaxIterations,
    /// Backtracking exhausted without an acceptable step.
    StepVanished,
}

/// One accepted outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
}

/// Result of one gradient-ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub phase: PhaseShifts,
    pub objective: f64,
    pub trace: Vec<IterationRecord>,
    pub termination: TerminationReason,
}

/// Backtracking gradient ascent on the smooth min-rate surrogate, with the
/// Armijo acceptance `f(θ+κg) ≥ f(θ) + κ_b·κ·‖g‖²`. The objective never
/// decreases across accepted iterates.
pub fn gradient_ascent(
    theta0: &PhaseShifts,
    config: &SystemConfig,
    opt: &OptimizerConfig,
) -> Result<OptimizationRun, OptimizerError> {
    if theta0.len() != config.n {
        return Err(OptimizerError::DimensionMismatch {
            what: "initial phase vector",
            got: theta0.len(),
            expected: config.n,
        });
    }
    let mut theta = theta0.clone();
    let mut f_cur = objective(config, &theta, opt.mu)?;
    let mut trace = vec![IterationRecord { iteration: 0, objective: f_cur, step: 0.0 }];
    let mut termination = TerminationReason::MaxIterations;
    for iter in 1..=opt.max_outer {
        let g = grad_objective(&theta, config, opt.mu)?;
        let g_sq = g.norm_squared();
        if g_sq == 0.0 {
            termination = TerminationReason::Converged;
            break;
        }
        // Initial step: largest per-coordinate move of π/2 along the ascent
        // direction (the objective is 2π-periodic per coordinate).
        let g_inf = g.amax();
        let mut kappa = std::f64::consts::FRAC_PI_2 / g_inf;
        let mut accepted = None;
        for _ in 0..opt.max_backtrack {
            let cand = PhaseShifts::new(theta.theta() + &g * kappa);
            let f_cand = objective(config, &cand, opt.mu)?;
            if f_cand >= f_cur + opt.kappa_b * kappa * g_sq {
                accepted = Some((cand, f_cand));
                break;
            }
            kappa *= opt.shrink;
        }
        let Some((next, f_next)) = accepted else {
            termination = TerminationReason::StepVanished;
            break;
        };
        let improvement = f_next - f_cur;
        theta = next;
        f_cur = f_next;
        trace.push(IterationRecord { iteration: iter, objective: f_cur, step: kappa });
        if improvement < opt.conv_tol {
            termination = TerminationReason::Converged;
            break;
        }
    }
    Ok(OptimizationRun { phase: theta, objective: f_cur, trace, termination })
}

/// Uniform random phase initialization on `[0, 2π)^N`.
pub fn random_phases(n: usize, seed: u64) -> PhaseShifts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PhaseShifts::new(DVector::from_fn(n, |_, _| {
        rng.gen::<f64>() * 2.0 * std::f64::consts::PI
    }))
}

/// Multi-restart gradient ascent: runs `restarts` independent random
/// initializations and keeps the best final objective.
pub fn gradient_ascent_restarts(
    config: &SystemConfig,
    opt: &OptimizerConfig,
    restarts: usize,
    seed: u64,
) -> Result<OptimizationRun, OptimizerError> {
    let mut best: Option<OptimizationRun> = None;
    for r in 0..restarts.max(1) {
        let theta0 = random_phases(config.n, seed.wrapping_add(r as u64));
        let run = gradient_ascent(&theta0, config, opt)?;
        if best.as_ref().map(|b| run.objective > b.objective).unwrap_or(true) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart executed"))
}

// ---------------------------------------------------------------------------
// Closed-form single-user design and phase constructions
// ---------------------------------------------------------------------------

/// Phases aligning every element of user `k`'s cascaded LoS path:
/// `θ_n = −ζ_n`, achieving `|f_k| = N`.
pub fn align_phases(config: &SystemConfig, k: usize) -> Result<PhaseShifts, OptimizerError> {
    let zeta = rate::cascade_phase_offsets(config, k)?;
    Ok(PhaseShifts::new(-zeta))
}

/// Phases cancelling user `k`'s cascaded LoS path (`|f_k| = 0`): adjacent
/// elements pair up in antiphase; for odd `N` the last three elements form a
/// zero-sum triple at angles `π/3`, `−π/3`, `π`.
pub fn cancel_phases(config: &SystemConfig, k: usize) -> Result<PhaseShifts, OptimizerError> {
    if config.n < 2 {
        return Err(OptimizerError::Infeasible {
            reason: "a single-element RIS always has |f| = 1; cancellation needs N >= 2",
        });
    }
    let zeta = rate::cascade_phase_offsets(config, k)?;
    let n = config.n;
    let mut offsets = vec![0.0; n];
    let paired = if n % 2 == 0 { n } else { n - 3 };
    for pair in 0..paired / 2 {
        offsets[2 * pair] = std::f64::consts::PI;
        offsets[2 * pair + 1] = 0.0;
    }
    if n % 2 == 1 {
        offsets[n - 3] = std::f64::consts::FRAC_PI_3;
        offsets[n - 2] = -std::f64::consts::FRAC_PI_3;
        offsets[n - 1] = std::f64::consts::PI;
    }
    Ok(PhaseShifts::new(DVector::from_iterator(
        n,
        zeta.iter().zip(offsets).map(|(&z, o)| o - z),
    )))
}

/// Single-user closed-form phase design.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleUserDesign {
    pub phase: PhaseShifts,
    /// Chosen endpoint of `x = |f|²`: either `0` or `N²`.
    pub x: f64,
    pub snr: f64,
}

/// Endpoint rule for a single user: the SNR is `(s1·x+s2)²/(t1·x+t2)` on
/// `x ∈ [0, N²]`, maximized at an endpoint determined by the derivative root
/// `x_0^R`; ties between endpoints resolve to full alignment.
pub fn single_user_design(config: &SystemConfig) -> Result<SingleUserDesign, OptimizerError> {
    let coeffs = rate::single_user_snr_coeffs(config).map_err(|e| match e {
        RateError::WrongCardinality { .. } => OptimizerError::WrongRegime {
            reason: "the closed-form design applies to single-user systems only",
        },
        RateError::WrongSpecialization { .. } => OptimizerError::WrongRegime {
            reason: "the closed-form design needs N > 1 and positive finite Rician factors",
        },
        other => OptimizerError::Rate(other),
    })?;
    let n2 = (config.n as f64) * (config.n as f64);
    let x0r = coeffs.x0_right();
    let aligned = if x0r <= 0.0 {
        true
    } else if x0r >= n2 {
        false
    } else {
        coeffs.snr(0.0) <= coeffs.snr(n2)
    };
    let (phase, x) = if aligned {
        (align_phases(config, 0)?, n2)
    } else {
        (cancel_phases(config, 0)?, 0.0)
    };
    Ok(SingleUserDesign { phase, x, snr: coeffs.snr(x) })
}
