//! `l1kde`: command-line driver for the L1 kernel-density experiments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l1kde_core::Error as CoreError;

use crate::commands::Ctx;
use crate::config::Config;
use crate::output::{config_digest, failed, unix_now, Outputs, RunManifest, CSV_SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration: exit 2.
    Config(String),
    /// Valid input, but the asymptotic regime is out of reach: exit 3.
    Regime(String),
    /// Checks ran and at least one failed: exit 4.
    Stat(Vec<String>),
    Io(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Regime(_) => 3,
            Self::Stat(_) => 4,
            Self::Io(_) | Self::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Regime(m) => write!(f, "outside the asymptotic regime: {m}"),
            Self::Stat(names) => write!(f, "failed checks: {}", names.join(", ")),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::NonUnitIntegral { .. }
            | CoreError::Unbounded { .. }
            | CoreError::DomainError { .. }
            | CoreError::DegenerateSet(_)
            | CoreError::EmptySet
            | CoreError::NonPositiveValue { .. }
            | CoreError::ScheduleViolation(_)
            | CoreError::InvalidConfig(_)
            | CoreError::Overflow { .. } => Self::Config(msg),
            CoreError::PartitionDegenerate(_) | CoreError::TooFewTailHits { .. } | CoreError::RejectionTooSlow { .. } => Self::Regime(msg),
            CoreError::SeriesDiverges { .. } => Self::Regime(msg),
            CoreError::QuadratureFailure { .. } | CoreError::WindowTooSmall { .. } | CoreError::DegenerateDenominator(_) => Self::Internal(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "l1kde", version, about = "Monte Carlo and rate diagnostics for the L1 error of kernel density estimators")]
struct Cli {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "L1KDE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asymptotic variance of the kernel, plus the rho table.
    Sigma2 {
        /// Built-in kernel: uniform, epanechnikov, tilt.
        #[arg(long, conflicts_with = "kernel_file")]
        kernel: Option<String>,
        /// TOML kernel description (name, breaks, coeffs, kappa).
        #[arg(long)]
        kernel_file: Option<PathBuf>,
    },
    /// Rate ledger and fitted log-log slopes for an example density.
    Rates {
        #[arg(long)]
        example: Option<u8>,
    },
    /// L1 central limit experiment over an (n, h) schedule.
    Simulate,
    /// Partition the line into blocks and check their moment structure.
    Blocks,
    /// Compare fixed-n and Poisson-conditioned statistics.
    Depoisson,
    /// Exponential-moment and tail bounds for the boundary-strip integral.
    Expbound,
    /// Collect every summary in the output directory.
    Report,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Self::Sigma2 { .. } => "sigma2",
            Self::Rates { .. } => "rates",
            Self::Simulate => "simulate",
            Self::Blocks => "blocks",
            Self::Depoisson => "depoisson",
            Self::Expbound => "expbound",
            Self::Report => "report",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = unix_now();
    let mut config = Config::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let command = cli.cmd.name();
    let mut out = Outputs::new(&cli.out_dir)?;
    let mut ctx = Ctx { config: &config, out: &mut out, threads: cli.threads };
    let checks = match &cli.cmd {
        Cmd::Sigma2 { kernel, kernel_file } => commands::sigma2(&mut ctx, kernel.as_deref(), kernel_file.as_deref()),
        Cmd::Rates { example } => commands::rates(&mut ctx, *example),
        Cmd::Simulate => commands::simulate(&mut ctx),
        Cmd::Blocks => commands::blocks(&mut ctx),
        Cmd::Depoisson => commands::depoisson(&mut ctx),
        Cmd::Expbound => commands::expbound(&mut ctx),
        Cmd::Report => commands::report(&mut ctx),
    };
    // the manifest is written even when the regime check fails, since the ledger is still useful
    let regime_err = match checks {
        Ok(c) => Ok(c),
        Err(e @ CliError::Regime(_)) if command == "rates" => Err(e),
        Err(e) => return Err(e),
    };
    let manifest = RunManifest {
        command: command.to_string(),
        config_digest: config_digest(command, &config),
        master_seed: config.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: out.files().to_vec(),
    };
    out.json(&format!("manifest_{command}.json"), &manifest)?;
    let checks = regime_err?;
    let bad = failed(&checks);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Stat(bad.into_iter().map(String::from).collect()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("l1kde: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
