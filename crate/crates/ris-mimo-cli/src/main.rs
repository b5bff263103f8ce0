//! `risexp` — experiment runner for the two-timescale RIS rate toolkit.
//!
//! Verbs:
//! - `run`: execute a named preset or a TOML configuration and emit CSV.
//! - `list-presets`: enumerate the built-in figure presets.
//! - `validate`: parse a configuration and echo the normalized result.
//!
//! Exit codes: 0 success, 2 usage or invalid configuration, 3 I/O failure.

mod config_file;
mod presets;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use config_file::ConfigFile;
use presets::{RunOptions, Row, CSV_HEADER, PRESETS};

#[derive(Parser)]
#[command(name = "risexp", version, about = "RIS-aided massive MIMO experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML configuration and write CSV results.
    Run(RunArgs),
    /// List the built-in figure presets.
    ListPresets,
    /// Parse a TOML configuration and echo the normalized values.
    Validate {
        /// Path to the configuration file.
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in preset name (see `list-presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to a TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo trials per sweep point.
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Seed for all pseudo-random draws; fixed seed gives bitwise-identical CSV.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path; omit to print the CSV to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lift the desk-scale caps (M, N <= 64; trials <= 20000).
    #[arg(long)]
    full_scale: bool,
    /// Record per-point wall time in the CSV (makes output timing-dependent).
    #[arg(long)]
    timing: bool,
}

/// Failure classified by exit code.
enum Failure {
    /// Usage error or invalid configuration — exit code 2.
    Invalid(String),
    /// File-system or output failure — exit code 3.
    Io(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::ListPresets => cmd_list_presets(),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn read_config(path: &PathBuf) -> Result<ConfigFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| Failure::Invalid(format!("{e:#}")))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let opts = RunOptions {
        trials: args.trials,
        seed: args.seed,
        full_scale: args.full_scale,
        timing: args.timing,
    };
    let start = Instant::now();
    let rows = match (&args.preset, &args.config) {
        (Some(name), None) => {
            presets::run_preset(name, &opts).map_err(|e| Failure::Invalid(format!("{e:#}")))?
        }
        (None, Some(path)) => {
            let file = read_config(path)?;
            let (config, _) = file
                .to_system_config()
                .map_err(|e| Failure::Invalid(format!("{e:#}")))?;
            let sweep = file
                .sweep
                .as_ref()
                .map(|s| (s.axis, s.grid.as_slice()));
            presets::run_config(&config, sweep, &opts)
                .map_err(|e| Failure::Invalid(format!("{e:#}")))?
        }
        _ => {
            return Err(Failure::Invalid(
                "run needs exactly one of --preset or --config".to_string(),
            ))
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    write_csv(&rows, args.out.as_ref()).map_err(|e| Failure::Io(format!("{e:#}")))?;
    let points: std::collections::BTreeSet<u64> =
        rows.iter().map(|r| r.sweep_value.to_bits()).collect();
    eprintln!(
        "wrote {} rows across {} sweep points in {:.2} s{}",
        rows.len(),
        points.len(),
        elapsed,
        args.out
            .as_ref()
            .map(|p| format!(" to {}", p.display()))
            .unwrap_or_default()
    );
    Ok(())
}

fn write_csv(rows: &[Row], out: Option<&PathBuf>) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("cannot write to standard output")?,
    }
    Ok(())
}

fn cmd_list_presets() -> Result<(), Failure> {
    for (name, description) in PRESETS {
        println!("{name:26} {description}");
    }
    Ok(())
}

fn cmd_validate(path: &PathBuf) -> Result<(), Failure> {
    let file = read_config(path)?;
    let (config, defaulted) = file
        .to_system_config()
        .map_err(|e| Failure::Invalid(format!("{e:#}")))?;
    let violations = config.violations();
    if !violations.is_empty() {
        let mut msg = String::from("configuration violates constraints:");
        for v in &violations {
            msg.push_str("\n  - ");
            msg.push_str(v);
        }
        return Err(Failure::Invalid(msg));
    }
    println!("configuration is valid");
    println!("  m = {}, n = {}, k = {}, tau = {}, tau_c = {}", config.m, config.n, config.k, config.tau, config.tau_c);
    println!("  p = {} dBm -> {:.4e} W", file.p_dbm, config.p);
    println!("  sigma2 = {} dBm -> {:.4e} W", file.sigma2_dbm, config.sigma2);
    match file.rho_db {
        Some(rho) => println!("  emi: rho = {rho} dB -> sigma_e2 = {:.4e} W", config.sigma_e2),
        None => println!("  emi: disabled"),
    }
    println!("  delta = {:?}, epsilon = {:?}", config.delta, config.epsilon);
    println!(
        "  model = {}, d_bs = {} lambda, d_ris = {} lambda",
        if config.correlated { "correlated" } else { "independent" },
        config.d_bs_over_lambda,
        config.d_ris_over_lambda
    );
    println!(
        "  pathlosses: alpha = {:?}, beta = {:.4e}, gamma = {:?}",
        config.alpha, config.beta, config.gamma
    );
    if defaulted.0.is_empty() {
        println!("  no defaulted fields");
    } else {
        println!("  defaulted fields:");
        for field in &defaulted.0 {
            println!("    - {field}");
        }
    }
    if let Some(sweep) = &file.sweep {
        println!("  sweep: {} over {:?}", sweep.axis.label(), sweep.grid);
    }
    Ok(())
}
