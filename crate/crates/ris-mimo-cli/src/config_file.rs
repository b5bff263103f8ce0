//! TOML experiment-configuration schema.
//!
//! Powers cross this boundary in dBm (EMI as a dB ratio over the noise
//! floor) and are converted once to linear watts; everything downstream is
//! linear. Geometry is given as distances; pathlosses are derived from the
//! semicircle layout unless overridden explicitly.

use anyhow::{bail, Context, Result};
use ris_mimo::channel;
use ris_mimo::{Angles, RicianFactor, SystemConfig};
use serde::Deserialize;

/// Converts a dBm figure to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Rician factor as written in TOML: a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum RicianField {
    Finite(f64),
    Flag(InfFlag),
}

/// The only accepted string spelling of an infinite Rician factor.
#[derive(Debug, Clone, Copy, Deserialize)]
pub enum InfFlag {
    #[serde(rename = "inf")]
    Inf,
}

impl RicianField {
    fn to_factor(self) -> RicianFactor {
        match self {
            RicianField::Finite(v) => RicianFactor::Finite(v),
            RicianField::Flag(_) => RicianFactor::Infinite,
        }
    }
}

/// Per-user Rician factors: one value for all users or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsilonField {
    Shared(RicianField),
    PerUser(Vec<RicianField>),
}

/// Sweep axes accepted in the `[sweep]` table and by presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    M,
    PDbm,
    Delta,
    Epsilon,
    RhoDb,
    DRis,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::M => "m",
            SweepAxis::PDbm => "p_dbm",
            SweepAxis::Delta => "delta",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::RhoDb => "rho_db",
            SweepAxis::DRis => "d_ris_over_lambda",
        }
    }
}

/// Optional sweep request inside a config file.
#[derive(Debug, Clone, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

/// The on-disk experiment configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Per-user transmit power in dBm.
    pub p_dbm: f64,
    /// Noise power in dBm.
    pub sigma2_dbm: f64,
    /// EMI-to-noise ratio in dB; omit for an EMI-free system.
    pub rho_db: Option<f64>,
    /// Pilot length; defaults to `k`.
    pub tau: Option<usize>,
    pub tau_c: usize,
    pub delta: RicianField,
    pub epsilon: EpsilonField,
    #[serde(default)]
    pub correlated: bool,
    /// BS antenna spacing in wavelengths (default half wavelength).
    pub d_bs_over_lambda: Option<f64>,
    /// RIS element spacing in wavelengths (default half wavelength).
    pub d_ris_over_lambda: Option<f64>,
    /// User semicircle radius around the RIS in meters (default 20).
    pub d_user_ris_m: Option<f64>,
    /// RIS–BS distance in meters (default 700).
    pub d_ris_bs_m: Option<f64>,
    pub sweep: Option<SweepTable>,
}

/// Fields that were filled from defaults, for the `validate` echo.
#[derive(Debug, Default, Clone)]
pub struct Defaulted(pub Vec<&'static str>);

/// The fixed LoS angle table used by the benchmark scenario.
pub fn table_angles(users: usize) -> Result<Angles> {
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
    if users > user_table.len() {
        bail!(
            "the built-in angle table covers {} users; got K = {users}",
            user_table.len()
        );
    }
    Ok(Angles {
        ris_departure: ris_mimo::AnglePair { azimuth: 4.17, elevation: 0.09 },
        bs_arrival: ris_mimo::AnglePair { azimuth: 6.28, elevation: 4.21 },
        user_arrival: user_table[..users]
            .iter()
            .map(|&(az, el)| ris_mimo::AnglePair { azimuth: az, elevation: el })
            .collect(),
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).context("failed to parse the experiment configuration")
    }

    /// Builds the system configuration, recording which fields were
    /// defaulted. Constraint violations are reported by the caller through
    /// [`SystemConfig::violations`], not here.
    pub fn to_system_config(&self) -> Result<(SystemConfig, Defaulted)> {
        let mut defaulted = Defaulted::default();
        let tau = self.tau.unwrap_or_else(|| {
            defaulted.0.push("tau (= K)");
            self.k
        });
        let d_bs = self.d_bs_over_lambda.unwrap_or_else(|| {
            defaulted.0.push("d_bs_over_lambda (= 0.5)");
            0.5
        });
        let d_ris = self.d_ris_over_lambda.unwrap_or_else(|| {
            defaulted.0.push("d_ris_over_lambda (= 0.5)");
            0.5
        });
        let d_ui = self.d_user_ris_m.unwrap_or_else(|| {
            defaulted.0.push("d_user_ris_m (= 20)");
            20.0
        });
        let d_ib = self.d_ris_bs_m.unwrap_or_else(|| {
            defaulted.0.push("d_ris_bs_m (= 700)");
            700.0
        });
        let geo = channel::scenario_geometry(self.k, d_ui, d_ib)
            .context("invalid scenario geometry")?;
        let sigma2 = dbm_to_watts(self.sigma2_dbm);
        let sigma_e2 = match self.rho_db {
            Some(rho) => sigma2 * 10f64.powf(rho / 10.0),
            None => {
                defaulted.0.push("rho_db (no EMI)");
                0.0
            }
        };
        let epsilon = match &self.epsilon {
            EpsilonField::Shared(e) => vec![e.to_factor(); self.k],
            EpsilonField::PerUser(list) => list.iter().map(|e| e.to_factor()).collect(),
        };
        let config = SystemConfig {
            m: self.m,
            n: self.n,
            k: self.k,
            p: dbm_to_watts(self.p_dbm),
            sigma2,
            sigma_e2,
            tau,
            tau_c: self.tau_c,
            delta: self.delta.to_factor(),
            epsilon,
            alpha: geo.alpha,
            gamma: geo.gamma,
            beta: geo.beta,
            d_bs_over_lambda: d_bs,
            d_ris_over_lambda: d_ris,
            angles: table_angles(self.k)?,
            correlated: self.correlated,
        };
        Ok((config, defaulted))
    }
}

/// Applies one sweep-axis value to a base configuration.
pub fn apply_axis(
    base: &SystemConfig,
    axis: SweepAxis,
    value: f64,
) -> Result<SystemConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::N => {
            if value <= 0.0 || value.fract() != 0.0 {
                bail!("sweep over n requires positive integers, got {value}");
            }
            cfg.n = value as usize;
        }
        SweepAxis::M => {
            if value <= 0.0 || value.fract() != 0.0 {
                bail!("sweep over m requires positive integers, got {value}");
            }
            cfg.m = value as usize;
        }
        SweepAxis::PDbm => cfg.p = dbm_to_watts(value),
        SweepAxis::Delta => cfg.delta = RicianFactor::Finite(value),
        SweepAxis::Epsilon => cfg.epsilon = vec![RicianFactor::Finite(value); cfg.k],
        SweepAxis::RhoDb => cfg.sigma_e2 = cfg.sigma2 * 10f64.powf(value / 10.0),
        SweepAxis::DRis => cfg.d_ris_over_lambda = value,
    }
    Ok(cfg)
}
