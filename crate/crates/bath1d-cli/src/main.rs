//! `bath1d`: steady-state superradiance in one-dimensional reservoirs.
//!
//! Every subcommand reads a TOML configuration, writes a `manifest.json`
//! stamping the full parameter set, and emits CSV data plus a JSON summary
//! into the output directory. All randomness flows from the manifest seed;
//! rerunning with an identical manifest reproduces identical bytes, and the
//! worker count never changes numerical results.

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::Config;
use output::OutDir;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bath1d", version, about = "Driven-dissipative spin dynamics in 1D photonic reservoirs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "bath1d.toml")]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); does not affect numerical results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Override the trajectory count.
    #[arg(long, global = true)]
    traj: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dense steady state, observables and optional spectrum (N ≤ 8).
    Exact,
    /// Mean-field trajectories, order parameters and magnetization.
    Meanfield,
    /// Stochastic ensemble: observables, correlations, field histogram.
    Twa,
    /// Cumulant superspin curves and closed-form thresholds.
    Superspin,
    /// Emission-rate scan over pump strengths with analytic overlays.
    Thresholds,
    /// Linewidth pipeline: relax, correlate, fit, locate the minimum.
    Linewidth,
    /// Fit the two-domain locking model to steady-state correlations.
    AnsatzFit,
    /// Diagonal collapse of a correlation matrix.
    Collapse {
        /// Existing c_matrix.csv to collapse instead of running a simulation.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Export Γ, J and the jump-mode decomposition for debugging.
    ModelExport,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut config = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(dt) = cli.dt {
        config.run.dt = dt;
    }
    if let Some(traj) = cli.traj {
        config.run.trajectories = traj;
    }
    if let Some(workers) = cli.workers {
        config.run.workers = workers;
    }
    config.validate()?;

    if config.run.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.workers)
            .build_global()?;
    }

    let out = OutDir::create(&cli.out)?;
    let name = match &cli.command {
        Command::Exact => "exact",
        Command::Meanfield => "meanfield",
        Command::Twa => "twa",
        Command::Superspin => "superspin",
        Command::Thresholds => "thresholds",
        Command::Linewidth => "linewidth",
        Command::AnsatzFit => "ansatz-fit",
        Command::Collapse { .. } => "collapse",
        Command::ModelExport => "model-export",
    };
    out.write_manifest(name, &config)?;

    match &cli.command {
        Command::Exact => commands::cmd_exact(&config, &out),
        Command::Meanfield => commands::cmd_meanfield(&config, &out),
        Command::Twa => commands::cmd_twa(&config, &out),
        Command::Superspin => commands::cmd_superspin(&config, &out),
        Command::Thresholds => commands::cmd_thresholds(&config, &out),
        Command::Linewidth => commands::cmd_linewidth(&config, &out),
        Command::AnsatzFit => commands::cmd_ansatz_fit(&config, &out),
        Command::Collapse { input } => commands::cmd_collapse(&config, &out, input.as_deref()),
        Command::ModelExport => commands::cmd_model_export(&config, &out),
    }
}
