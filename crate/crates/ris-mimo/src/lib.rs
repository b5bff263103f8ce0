//! Simulation and optimization toolkit for the uplink of an RIS-aided
//! (reconfigurable-intelligent-surface-aided) massive MIMO system under a
//! two-timescale design: the base station combines with per-interval
//! instantaneous channel estimates while the RIS phase shifts are designed
//! from slowly varying statistical CSI only.
//!
//! The crate answers four questions:
//!
//! 1. **What does the channel look like?** ([`channel`]) Deterministic
//!    line-of-sight geometry (ULA/USPA array responses, sinc spatial
//!    correlation, pathloss) plus reproducible random draws of every
//!    non-line-of-sight block and of electromagnetic interference (EMI).
//! 2. **How well can the aggregated channel be estimated?** ([`estimation`])
//!    LMMSE estimators for both the spatially independent and the
//!    correlated+EMI models, with closed-form MSE/NMSE.
//! 3. **What rate does maximal-ratio combining achieve?** ([`rate`])
//!    Closed-form use-and-then-forget (UatF) rate expressions, their
//!    specializations and asymptotic power-scaling limits, all validated
//!    against the Monte Carlo oracles in [`montecarlo`].
//! 4. **How should the phase shifts be chosen?** ([`optimizer`]) Analytic
//!    gradients of a log-sum-exp min-rate surrogate, backtracking gradient
//!    ascent, and closed-form single-user designs; [`baseline`] provides the
//!    instantaneous-CSI comparison scheme.
//!
//! All computations are pure functions of an explicit [`SystemConfig`],
//! [`PhaseShifts`] vector and RNG seed; identical inputs produce bitwise
//! identical outputs, including under parallel Monte Carlo execution.

pub mod baseline;
pub mod channel;
pub mod config;
pub mod estimation;
pub mod montecarlo;
pub mod optimizer;
pub mod rate;

pub use channel::{ChannelRealization, CorrelationMatrices, ScenarioGeometry};
pub use config::{AnglePair, Angles, CsiMode, PhaseShifts, RicianFactor, SystemConfig};
pub use estimation::{EstimateResult, LmmseModel, UpsilonModel};
pub use montecarlo::McEstimate;
pub use rate::{CorrelatedRateTerms, RateBreakdown, ScalingLaw, SingleUserSnr};
