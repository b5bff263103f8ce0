//! Scenario description: dimensions, powers, Rician factors, pathlosses,
//! geometry angles and the RIS phase-shift vector.
//!
//! Everything downstream (channel sampling, estimation, rate analysis,
//! optimization) is a pure function of a [`SystemConfig`] plus, where phases
//! matter, a [`PhaseShifts`] vector. All powers are stored in linear watts;
//! any dBm conversion happens at the configuration-file boundary, never here.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

/// Validation failure for a [`SystemConfig`]. Collects *all* violations so a
/// user can fix a configuration file in one pass.
#[derive(Debug, Error)]
#[error("invalid system configuration: {}", violations.join("; "))]
pub struct ConfigError {
    /// Human-readable description of each violated constraint.
    pub violations: Vec<String>,
}

/// Ratio of line-of-sight to scattered power on a fading link.
///
/// `Finite(0.0)` is Rayleigh fading (no LoS component); `Infinite` is a
/// purely deterministic LoS channel. The infinite case is an explicit flag so
/// that analytic limits are evaluated symbolically instead of through a large
/// float that would overflow intermediate products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RicianFactor {
    /// Finite factor `κ ≥ 0`.
    Finite(f64),
    /// Purely line-of-sight limit `κ → ∞`.
    Infinite,
}

impl RicianFactor {
    /// Fraction `κ/(κ+1)` of link power carried by the LoS component.
    pub fn los_fraction(self) -> f64 {
        match self {
            RicianFactor::Finite(k) => k / (k + 1.0),
            RicianFactor::Infinite => 1.0,
        }
    }

    /// Fraction `1/(κ+1)` of link power carried by the scattered component.
    pub fn nlos_fraction(self) -> f64 {
        match self {
            RicianFactor::Finite(k) => 1.0 / (k + 1.0),
            RicianFactor::Infinite => 0.0,
        }
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            RicianFactor::Finite(k) => Some(k),
            RicianFactor::Infinite => None,
        }
    }

    /// True when the factor is a real number (possibly zero).
    pub fn is_finite(self) -> bool {
        matches!(self, RicianFactor::Finite(_))
    }

    fn is_valid(self) -> bool {
        match self {
            RicianFactor::Finite(k) => k.is_finite() && k >= 0.0,
            RicianFactor::Infinite => true,
        }
    }
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    pub azimuth: f64,
    pub elevation: f64,
}

/// All LoS geometry angles of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Angles {
    /// Angle of departure from the RIS toward the BS.
    pub ris_departure: AnglePair,
    /// Angle of arrival at the BS from the RIS.
    pub bs_arrival: AnglePair,
    /// Angle of arrival at the RIS from each user (length `K`).
    pub user_arrival: Vec<AnglePair>,
}

/// Whether rate expressions use estimated or genie-aided channel knowledge.
///
/// The perfect-CSI switch replaces every estimation-quality coefficient by 1
/// and removes the pilot-noise contribution, leaving the rest of the rate
/// expression untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// LMMSE channel estimates from `τ` pilot symbols.
    Estimated,
    /// Genie-aided perfect aggregated-channel knowledge.
    Perfect,
}

/// Complete uplink scenario: one BS with `M` antennas, one RIS with `N`
/// elements (a `√N × √N` planar array), `K` single-antenna users.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antenna count `M`.
    pub m: usize,
    /// RIS element count `N` (perfect square when planar responses are used).
    pub n: usize,
    /// User count `K`.
    pub k: usize,
    /// Per-user transmit power `p` in watts.
    pub p: f64,
    /// Receiver noise power `σ²` in watts.
    pub sigma2: f64,
    /// EMI power `σ_e²` in watts (correlated model only).
    pub sigma_e2: f64,
    /// Pilot length `τ` (symbols per coherence interval spent on training).
    pub tau: usize,
    /// Coherence-interval length `τ_c` in symbols.
    pub tau_c: usize,
    /// RIS–BS Rician factor `δ`.
    pub delta: RicianFactor,
    /// Per-user user–RIS Rician factors `ε_k` (length `K`).
    pub epsilon: Vec<RicianFactor>,
    /// Per-user user–RIS pathlosses `α_k` (linear, length `K`).
    pub alpha: Vec<f64>,
    /// Per-user direct user–BS pathlosses `γ_k` (linear, length `K`).
    pub gamma: Vec<f64>,
    /// RIS–BS pathloss `β` (linear).
    pub beta: f64,
    /// BS antenna spacing in wavelengths.
    pub d_bs_over_lambda: f64,
    /// RIS element spacing in wavelengths.
    pub d_ris_over_lambda: f64,
    /// All LoS angles.
    pub angles: Angles,
    /// Selects the spatially correlated + EMI model.
    pub correlated: bool,
}

impl SystemConfig {
    /// Lists every violated configuration constraint (empty = valid).
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.m == 0 {
            v.push("antenna count M must be positive".to_string());
        }
        if self.n == 0 {
            v.push("RIS element count N must be positive".to_string());
        }
        if self.k == 0 {
            v.push("user count K must be positive".to_string());
        }
        if self.tau < self.k {
            v.push(format!(
                "pilot length tau = {} must be at least the user count K = {}",
                self.tau, self.k
            ));
        }
        if self.tau_c <= self.tau {
            v.push(format!(
                "coherence length tau_c = {} must exceed the pilot length tau = {}",
                self.tau_c, self.tau
            ));
        }
        for (name, val) in [
            ("p", self.p),
            ("sigma2", self.sigma2),
            ("sigma_e2", self.sigma_e2),
            ("beta", self.beta),
        ] {
            if !(val.is_finite() && val >= 0.0) {
                v.push(format!("power/pathloss {name} must be finite and >= 0, got {val}"));
            }
        }
        if self.p == 0.0 {
            v.push("transmit power p must be positive".to_string());
        }
        for (name, list, expected) in [
            ("epsilon", self.epsilon.len(), self.k),
            ("alpha", self.alpha.len(), self.k),
            ("gamma", self.gamma.len(), self.k),
            ("user arrival angles", self.angles.user_arrival.len(), self.k),
        ] {
            if list != expected {
                v.push(format!("per-user field {name} has length {list}, expected K = {expected}"));
            }
        }
        if !self.delta.is_valid() {
            v.push("RIS-BS Rician factor delta must be >= 0 or the infinite flag".to_string());
        }
        for (k, e) in self.epsilon.iter().enumerate() {
            if !e.is_valid() {
                v.push(format!("user {k} Rician factor epsilon must be >= 0 or the infinite flag"));
            }
        }
        for (k, &a) in self.alpha.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                v.push(format!("user {k} pathloss alpha must be finite and >= 0, got {a}"));
            }
        }
        for (k, &g) in self.gamma.iter().enumerate() {
            if !(g.is_finite() && g >= 0.0) {
                v.push(format!("user {k} pathloss gamma must be finite and >= 0, got {g}"));
            }
        }
        if !(self.d_bs_over_lambda > 0.0 && self.d_bs_over_lambda.is_finite()) {
            v.push("BS element spacing must be positive".to_string());
        }
        if !(self.d_ris_over_lambda > 0.0 && self.d_ris_over_lambda.is_finite()) {
            v.push("RIS element spacing must be positive".to_string());
        }
        if self.n > 0 && !is_perfect_square(self.n) {
            v.push(format!(
                "RIS element count N = {} must be a perfect square for the planar array",
                self.n
            ));
        }
        if self.correlated {
            for (k, e) in self.epsilon.iter().enumerate() {
                if e.is_finite() {
                    v.push(format!(
                        "correlated model requires a purely LoS user-RIS link; user {k} has a finite Rician factor"
                    ));
                }
            }
        }
        v
    }

    /// Validates the configuration, reporting every violation at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations })
        }
    }

    /// Effective pilot-noise power `σ²/(τp)` seen by the projected
    /// observation of one user.
    pub fn pilot_noise_power(&self) -> f64 {
        self.sigma2 / (self.tau as f64 * self.p)
    }

    /// Rate prelog `(τ_c − τ)/τ_c`: the fraction of each coherence interval
    /// left for payload after training.
    pub fn prelog(&self) -> f64 {
        (self.tau_c as f64 - self.tau as f64) / self.tau_c as f64
    }

    /// Integer square root of `N` (the planar-array side length).
    pub fn ris_side(&self) -> usize {
        (self.n as f64).sqrt().round() as usize
    }

    /// Power split of user `k`'s cascaded (user–RIS–BS) link over the four
    /// LoS/NLoS component combinations. See [`CascadedPower`].
    pub fn cascaded_power(&self, k: usize) -> CascadedPower {
        CascadedPower::new(self.beta, self.alpha[k], self.delta, self.epsilon[k])
    }

    /// Statistical strength `β·α_k/(δ+1)` of the scattered RIS–BS component
    /// of user `k`'s cascaded link when the user–RIS link is purely LoS.
    pub fn cascaded_nlos_ris_bs(&self, k: usize) -> f64 {
        self.beta * self.alpha[k] * self.delta.nlos_fraction()
    }
}

/// Statistical power of each of the four LoS/NLoS components of a cascaded
/// user–RIS–BS link.
///
/// Writing the link as a sum over (RIS–BS component) × (user–RIS component),
/// these four numbers are the products `β·α` times the corresponding LoS or
/// NLoS power fractions of the two Rician factors. They stay finite for any
/// factors in `[0, ∞]`, which is how infinite Rician factors are evaluated as
/// exact analytic limits: every closed-form expression in this crate is
/// assembled from monomials in these atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadedPower {
    /// Both components scattered: the textbook coefficient `c = βα/((δ+1)(ε+1))`.
    pub nlos_nlos: f64,
    /// LoS RIS–BS, scattered user–RIS: `c·δ`.
    pub los_nlos: f64,
    /// Scattered RIS–BS, LoS user–RIS: `c·ε`.
    pub nlos_los: f64,
    /// Both components LoS: `c·δ·ε`.
    pub los_los: f64,
}

impl CascadedPower {
    /// Splits `β·α` over the LoS/NLoS fractions of the two Rician factors.
    pub fn new(beta: f64, alpha: f64, delta: RicianFactor, epsilon: RicianFactor) -> Self {
        let total = beta * alpha;
        CascadedPower {
            nlos_nlos: total * delta.nlos_fraction() * epsilon.nlos_fraction(),
            los_nlos: total * delta.los_fraction() * epsilon.nlos_fraction(),
            nlos_los: total * delta.nlos_fraction() * epsilon.los_fraction(),
            los_los: total * delta.los_fraction() * epsilon.los_fraction(),
        }
    }

    /// `c·(ε+1)`: total power of the scattered-RIS–BS half of the link.
    pub fn nlos_ris_bs(&self) -> f64 {
        self.nlos_los + self.nlos_nlos
    }
}

/// RIS phase-shift vector `θ` with its derived unit-modulus representation.
///
/// The reflection matrix is `Φ = diag(e^{jθ_1}, …, e^{jθ_N})`; only the
/// diagonal is ever stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShifts {
    theta: DVector<f64>,
}

impl PhaseShifts {
    /// Wraps an angle vector (radians); any real values are admissible since
    /// the reflection response is 2π-periodic per coordinate.
    pub fn new(theta: DVector<f64>) -> Self {
        PhaseShifts { theta }
    }

    /// All-zero phases (identity reflection).
    pub fn zeros(n: usize) -> Self {
        PhaseShifts { theta: DVector::zeros(n) }
    }

    /// Number of RIS elements.
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    /// True iff the vector is empty.
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// The raw angle vector.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// The unit-modulus diagonal `c = e^{jθ}` of the reflection matrix.
    pub fn unit_diagonal(&self) -> DVector<Complex64> {
        self.theta.map(|t| Complex64::from_polar(1.0, t))
    }

    /// Applies `Φ` to a vector: component-wise product with `e^{jθ}`.
    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(
            x.len(),
            x.iter().zip(self.theta.iter()).map(|(&xi, &t)| xi * Complex64::from_polar(1.0, t)),
        )
    }

    /// Applies `Φ^H` to a vector: component-wise product with `e^{-jθ}`.
    pub fn apply_conj(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(
            x.len(),
            x.iter().zip(self.theta.iter()).map(|(&xi, &t)| xi * Complex64::from_polar(1.0, -t)),
        )
    }
}

fn is_perfect_square(n: usize) -> bool {
    let s = (n as f64).sqrt().round() as usize;
    s * s == n
}
