//! `ruee`: batch experiments for the waveform-switching radio-unit model.
//!
//! Exit status: 0 success, 1 I/O failure, 2 configuration error,
//! 3 infeasible experiment, 4 internal non-convergence.

mod experiments;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ruee_core::config::{self, ScenarioConfig};
use ruee_core::linkbudget::LinkBudgetError;
use ruee_core::optimizer::OptimizerError;
use ruee_core::receiver::ReceiverError;

#[derive(Debug, Parser)]
#[command(name = "ruee", version, about = "Waveform switching and radio-unit energy efficiency experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file; the bundled defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set pa.p_sat_dbm=44` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Overrides `sweep.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `sweep.trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// PAPR CCDF of CP-OFDM and DFT-s-OFDM.
    Papr,
    /// EVM versus PA backoff, plus equalized constellations.
    EvmSweep,
    /// Minimum EVM-compliant backoff per waveform.
    MinBackoff,
    /// SIMO/MIMO RU power versus spectral efficiency and crossover points.
    Crossover,
    /// RU power and EE of each strategy over a spectral-efficiency grid.
    SweepSe,
    /// Unconstrained EE optimum of each strategy.
    OptimizeEe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Papr => "papr",
            Command::EvmSweep => "evm-sweep",
            Command::MinBackoff => "min-backoff",
            Command::Crossover => "crossover",
            Command::SweepSe => "sweep-se",
            Command::OptimizeEe => "optimize-ee",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ruee_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ruee_core::Error as E;
        match self {
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Config(_) | E::Waveform(_) | E::Channel(_) => 2,
                E::Receiver(ReceiverError::Infeasible { .. })
                | E::LinkBudget(LinkBudgetError::CapExceeded { .. })
                | E::Optimizer(OptimizerError::ConstraintConflict { .. }) => 3,
                E::Optimizer(OptimizerError::NonConvergence { .. }) => 4,
                E::Receiver(ReceiverError::Waveform(_) | ReceiverError::Channel(_)) => 2,
                _ => 4,
            },
        }
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
core_from!(
    config::ConfigError,
    ReceiverError,
    LinkBudgetError,
    OptimizerError,
    ruee_core::waveform::WaveformError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("sweep.seed={seed}"));
    }
    if let Some(trials) = cli.trials {
        overrides.push(format!("sweep.trials={trials}"));
    }
    Ok(match &cli.config {
        Some(path) => config::load_scenario(path, &overrides)?,
        None => config::parse_scenario(config::DEFAULT_SCENARIO_TOML, &overrides)?,
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    log::info!("{} with seed {} and {} trials", cli.command.name(), cfg.sweep.seed, cfg.sweep.trials);
    std::fs::create_dir_all(&cli.out)?;
    let mut out = output::Artifacts::new(&cli.out);
    experiments::run(cli.command, &cfg, &mut out, cli.plot)?;
    out.write_manifest(cli.command.name(), &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
