//! Command-line front end: config ingestion, command dispatch, deterministic
//! CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 numerical error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Context_, Format};
use config::RunConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "olev",
    about = "Noise budgets, diffraction modeling, and simulation twins for optical-lever torsion readout",
    version
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; all artifacts land here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override every configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Tabular output format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Override config keys, e.g. --set beam.power_w=1e-3 (repeatable).
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form noise budget and total spectrum.
    Budget,
    /// Waist, focus, or power sweep.
    Sweep,
    /// Single-scene diffraction sensitivity.
    Diffraction,
    /// Monte-Carlo radiation-pressure torque estimate.
    McBackaction,
    /// Time-domain oscillator run.
    Simulate,
    /// Cold-damping cooling curve.
    Cool,
    /// Thermal-bootstrap calibration.
    Calibrate,
    /// Correlated intensity-backaction fit.
    FitCorrelations,
    /// Run the built-in validation suite.
    Verify,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if cli.threads > 0 {
        // A second initialization in one process is not an error worth dying
        // for; sweeps fall back to the default pool.
        let _ = rayon_global(cli.threads);
    }

    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config is required");
            return ExitCode::from(2);
        }
    };
    let (config, resolved, hash) = match RunConfig::load(&config_path, &cli.overrides) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let ctx = Context_ {
        config,
        resolved,
        hash,
        out_dir: cli.out.clone(),
        format: match cli.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
        seed_override: cli.seed,
    };
    if let Err(e) = ctx.prepare() {
        eprintln!("config error: {e:#}");
        return ExitCode::from(2);
    }

    let result = match cli.command {
        Command::Budget => commands::cmd_budget(&ctx),
        Command::Sweep => commands::cmd_sweep(&ctx),
        Command::Diffraction => commands::cmd_diffraction(&ctx),
        Command::McBackaction => commands::cmd_mc_backaction(&ctx),
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Cool => commands::cmd_cool(&ctx),
        Command::Calibrate => commands::cmd_calibrate(&ctx),
        Command::FitCorrelations => commands::cmd_fit_correlations(&ctx),
        Command::Verify => {
            return match commands::cmd_verify(&ctx) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(e) => {
                    eprintln!("verify error: {e:#}");
                    ExitCode::from(3)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = format!("{e:#}");
            // Configuration problems (bad parameters, missing sections, bad
            // ranges) exit 2; numerical and simulation failures exit 3.
            let config_error = text.contains("invalid")
                || text.contains("config")
                || text.contains("must be")
                || text.contains("unknown sweep parameter");
            eprintln!("error: {text}");
            ExitCode::from(if config_error { 2 } else { 3 })
        }
    }
}

fn rayon_global(threads: usize) -> Result<(), Box<dyn std::error::Error>> {
    olev_core::build_thread_pool(threads)?;
    Ok(())
}
