//! Figure presets and sweep execution.
//!
//! Every preset resolves to a list of sweep points; each point produces one
//! CSV row per user with the fixed schema documented in [`CSV_HEADER`].
//! Desk-scale caps keep preset runtimes interactive; `--full-scale` lifts
//! them for large reproduction runs.

use anyhow::{bail, Result};
use ris_mimo::config::RicianFactor;
use ris_mimo::{baseline, estimation, montecarlo, optimizer, rate, PhaseShifts, SystemConfig};
use std::time::Instant;

use crate::config_file::{apply_axis, dbm_to_watts, table_angles, SweepAxis};

/// Fixed CSV schema shared by every preset and custom run.
pub const CSV_HEADER: &str = "sweep_value,user_index,rate_closed_form,rate_mc,rate_mc_stderr,min_rate,nmse,trace_mse,wall_time_s";

/// Desk-scale antenna/element cap for Monte Carlo or optimizer work.
pub const DESK_DIM_CAP: usize = 64;
/// Desk-scale Monte Carlo trial cap.
pub const DESK_TRIAL_CAP: usize = 20_000;

/// How one sweep point is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Eval {
    /// Closed-form NMSE/MSE only; no sampling, no dimension cap.
    NmseOnly,
    /// Closed-form rate plus Monte Carlo at fixed pseudo-random phases.
    FixedPhases,
    /// Phases optimized by gradient ascent, then closed form plus MC.
    Optimized { max_outer: usize },
    /// Single-user instantaneous-CSI baseline comparison.
    Baseline,
}

/// One resolved sweep point.
struct Point {
    sweep_value: f64,
    config: SystemConfig,
    eval: Eval,
}

/// One output row of the fixed schema; `None` prints as an empty cell.
pub struct Row {
    pub sweep_value: f64,
    pub user_index: usize,
    pub rate_closed_form: Option<f64>,
    pub rate_mc: Option<f64>,
    pub rate_mc_stderr: Option<f64>,
    pub min_rate: Option<f64>,
    pub nmse: Option<f64>,
    pub trace_mse: Option<f64>,
    pub wall_time_s: f64,
}

impl Row {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.sweep_value,
            self.user_index,
            cell(self.rate_closed_form),
            cell(self.rate_mc),
            cell(self.rate_mc_stderr),
            cell(self.min_rate),
            cell(self.nmse),
            cell(self.trace_mse),
            self.wall_time_s,
        )
    }
}

/// Stable preset listing: (name, one-line description).
pub const PRESETS: &[(&str, &str)] = &[
    (
        "fig2-nmse",
        "estimation NMSE and MSE trace versus RIS size N in {4,16,64,256}",
    ),
    (
        "fig3-rate",
        "closed-form versus Monte Carlo per-user rate over N in {4,16,36,64}",
    ),
    (
        "fig4-baseline",
        "two-timescale rate versus the instantaneous-CSI baseline over N in {16,36,64}",
    ),
    (
        "fig8-rician-delta",
        "optimized min-rate versus the RIS-BS Rician factor in {0.5,1,2,8}",
    ),
    (
        "fig8-rician-epsilon",
        "optimized min-rate versus the user-link Rician factor in {1,10,100}",
    ),
    (
        "fig11-correlation",
        "optimized min-rate versus RIS spacing {0.5,0.25,0.125} wavelengths at N=16",
    ),
    (
        "fig11-correlation-small",
        "optimized min-rate versus RIS spacing {0.5,0.25,0.125} wavelengths at N=4",
    ),
    (
        "fig12-emi",
        "rate versus the EMI-to-noise ratio in {30,50,70,90} dB at fixed phases",
    ),
];

/// Benchmark scenario shared by the presets (semicircle layout, 30 dBm
/// transmit power, -104 dBm noise, 196-symbol coherence interval).
fn scenario(m: usize, n: usize, k: usize) -> Result<SystemConfig> {
    let geo = ris_mimo::channel::scenario_geometry(k, 20.0, 700.0)?;
    Ok(SystemConfig {
        m,
        n,
        k,
        p: dbm_to_watts(30.0),
        sigma2: dbm_to_watts(-104.0),
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
        angles: table_angles(k)?,
        correlated: false,
    })
}

/// The correlated+EMI variant of the benchmark scenario.
fn scenario_correlated(
    m: usize,
    n: usize,
    k: usize,
    d_ris: f64,
    rho_db: f64,
) -> Result<SystemConfig> {
    let mut cfg = scenario(m, n, k)?;
    cfg.correlated = true;
    cfg.epsilon = vec![RicianFactor::Infinite; k];
    cfg.d_ris_over_lambda = d_ris;
    cfg.sigma_e2 = cfg.sigma2 * 10f64.powf(rho_db / 10.0);
    Ok(cfg)
}

fn resolve_preset(name: &str) -> Result<Vec<Point>> {
    let points = match name {
        "fig2-nmse" => [4usize, 16, 64, 256]
            .iter()
            .map(|&n| {
                Ok(Point {
                    sweep_value: n as f64,
                    config: scenario(16, n, 4)?,
                    eval: Eval::NmseOnly,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig3-rate" => [4usize, 16, 36, 64]
            .iter()
            .map(|&n| {
                Ok(Point {
                    sweep_value: n as f64,
                    config: scenario(16, n, 4)?,
                    eval: Eval::FixedPhases,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig4-baseline" => [16usize, 36, 64]
            .iter()
            .map(|&n| {
                Ok(Point {
                    sweep_value: n as f64,
                    config: scenario(8, n, 1)?,
                    eval: Eval::Baseline,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig8-rician-delta" => [0.5f64, 1.0, 2.0, 8.0]
            .iter()
            .map(|&d| {
                let mut config = scenario(16, 16, 4)?;
                config.delta = RicianFactor::Finite(d);
                Ok(Point { sweep_value: d, config, eval: Eval::Optimized { max_outer: 100 } })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig8-rician-epsilon" => [1.0f64, 10.0, 100.0]
            .iter()
            .map(|&e| {
                let mut config = scenario(16, 16, 4)?;
                config.epsilon = vec![RicianFactor::Finite(e); 4];
                Ok(Point { sweep_value: e, config, eval: Eval::Optimized { max_outer: 100 } })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig11-correlation" => [0.5f64, 0.25, 0.125]
            .iter()
            .map(|&d| {
                Ok(Point {
                    sweep_value: d,
                    config: scenario_correlated(16, 16, 4, d, 30.0)?,
                    eval: Eval::Optimized { max_outer: 60 },
                })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig11-correlation-small" => [0.5f64, 0.25, 0.125]
            .iter()
            .map(|&d| {
                Ok(Point {
                    sweep_value: d,
                    config: scenario_correlated(16, 4, 4, d, 30.0)?,
                    eval: Eval::Optimized { max_outer: 60 },
                })
            })
            .collect::<Result<Vec<_>>>()?,
        "fig12-emi" => [30.0f64, 50.0, 70.0, 90.0]
            .iter()
            .map(|&rho| {
                Ok(Point {
                    sweep_value: rho,
                    config: scenario_correlated(16, 16, 4, 0.25, rho)?,
                    eval: Eval::FixedPhases,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        other => bail!(
            "unknown preset '{other}'; run `risexp list-presets` for the available set"
        ),
    };
    Ok(points)
}

/// Sweep-run options resolved from the command line.
pub struct RunOptions {
    pub trials: usize,
    pub seed: u64,
    pub full_scale: bool,
    pub timing: bool,
}

fn check_caps(point: &Point, trials: usize, full_scale: bool) -> Result<()> {
    if full_scale || point.eval == Eval::NmseOnly {
        return Ok(());
    }
    let cfg = &point.config;
    if cfg.m > DESK_DIM_CAP || cfg.n > DESK_DIM_CAP {
        bail!(
            "sweep point at {} has M={} / N={} beyond the desk-scale cap of {DESK_DIM_CAP}; pass --full-scale to run it",
            point.sweep_value, cfg.m, cfg.n
        );
    }
    if trials > DESK_TRIAL_CAP {
        bail!(
            "{trials} Monte Carlo trials exceed the desk-scale cap of {DESK_TRIAL_CAP}; pass --full-scale to run them"
        );
    }
    Ok(())
}

fn evaluate_point(point: &Point, opts: &RunOptions) -> Result<Vec<Row>> {
    let start = Instant::now();
    let cfg = &point.config;
    let k = cfg.k;
    let mut rows = Vec::with_capacity(k);
    match point.eval {
        Eval::NmseOnly => {
            let reports = estimation::mse_nmse(cfg, &PhaseShifts::zeros(cfg.n))?;
            for (u, r) in reports.iter().enumerate() {
                rows.push(Row {
                    sweep_value: point.sweep_value,
                    user_index: u,
                    rate_closed_form: None,
                    rate_mc: None,
                    rate_mc_stderr: None,
                    min_rate: None,
                    nmse: Some(r.nmse),
                    trace_mse: Some(r.trace_mse),
                    wall_time_s: 0.0,
                });
            }
        }
        Eval::FixedPhases | Eval::Optimized { .. } => {
            let phase = match point.eval {
                Eval::Optimized { max_outer } => {
                    let opt = optimizer::OptimizerConfig { max_outer, ..Default::default() };
                    optimizer::gradient_ascent_restarts(cfg, &opt, 2, opts.seed)?.phase
                }
                _ => optimizer::random_phases(cfg.n, opts.seed),
            };
            let closed = if cfg.correlated {
                rate::rate_correlated(cfg, &phase)?.0
            } else {
                rate::rate_independent(cfg, &phase)?
            };
            let mc = montecarlo::rate_mc_report(cfg, &phase, opts.trials, opts.seed)?;
            let nmse = estimation::mse_nmse(cfg, &phase)?;
            let min_rate = closed.min_rate();
            for u in 0..k {
                rows.push(Row {
                    sweep_value: point.sweep_value,
                    user_index: u,
                    rate_closed_form: Some(closed.users[u].rate),
                    rate_mc: Some(mc[u].rate),
                    rate_mc_stderr: Some(mc[u].stderr),
                    min_rate: Some(min_rate),
                    nmse: Some(nmse[u].nmse),
                    trace_mse: Some(nmse[u].trace_mse),
                    wall_time_s: 0.0,
                });
            }
        }
        Eval::Baseline => {
            // Single-user comparison row: the closed-form column carries the
            // two-timescale rate under the statistical phase design; the MC
            // columns carry the sampled instantaneous baseline with its
            // training overhead; the min-rate column carries the idealized
            // (overhead-waived) baseline.
            let design = optimizer::single_user_design(cfg)?;
            let closed = rate::rate_independent(cfg, &design.phase)?;
            let intervals = 64;
            let per_interval = (opts.trials / intervals).max(1);
            let report = baseline::instantaneous_scheme(cfg, intervals, per_interval, opts.seed)?;
            let prelog = (1.0 - (cfg.n as f64 + 1.0) / cfg.tau_c as f64).max(0.0);
            let rates: Vec<f64> = report
                .intervals
                .iter()
                .map(|r| prelog * (1.0 + r.snr).log2())
                .collect();
            let t = rates.len() as f64;
            let mean = rates.iter().sum::<f64>() / t;
            let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (t - 1.0);
            let nmse = estimation::mse_nmse(cfg, &design.phase)?;
            rows.push(Row {
                sweep_value: point.sweep_value,
                user_index: 0,
                rate_closed_form: Some(closed.users[0].rate),
                rate_mc: Some(report.avg_rate_with_overhead),
                rate_mc_stderr: Some((var / t).sqrt()),
                min_rate: Some(report.avg_rate_idealized),
                nmse: Some(nmse[0].nmse),
                trace_mse: Some(nmse[0].trace_mse),
                wall_time_s: 0.0,
            });
        }
    }
    if opts.timing {
        let elapsed = start.elapsed().as_secs_f64();
        for row in &mut rows {
            row.wall_time_s = elapsed;
        }
    }
    Ok(rows)
}

/// Runs a named preset, returning all CSV rows in sweep order.
pub fn run_preset(name: &str, opts: &RunOptions) -> Result<Vec<Row>> {
    let points = resolve_preset(name)?;
    run_points(points, opts)
}

/// Runs a custom configuration with an optional sweep table.
pub fn run_config(
    base: &SystemConfig,
    sweep: Option<(SweepAxis, &[f64])>,
    opts: &RunOptions,
) -> Result<Vec<Row>> {
    let points = match sweep {
        Some((axis, grid)) => {
            if grid.is_empty() {
                bail!("the sweep grid must not be empty");
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                bail!("the sweep grid must be strictly increasing");
            }
            grid.iter()
                .map(|&v| {
                    Ok(Point {
                        sweep_value: v,
                        config: apply_axis(base, axis, v)?,
                        eval: Eval::FixedPhases,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![Point { sweep_value: 0.0, config: base.clone(), eval: Eval::FixedPhases }],
    };
    run_points(points, opts)
}

fn run_points(points: Vec<Point>, opts: &RunOptions) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for point in &points {
        if let Err(e) = point.config.validate() {
            bail!("sweep point at {} is invalid: {e}", point.sweep_value);
        }
        check_caps(point, opts.trials, opts.full_scale)?;
        rows.extend(evaluate_point(point, opts)?);
    }
    Ok(rows)
}
