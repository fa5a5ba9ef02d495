//! `aoii`: solve, simulate, sweep and validate AoII threshold policies.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Overrides, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Exit codes, one per failure class.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const MODEL: u8 = 3;
    pub const SOLVER: u8 = 4;
    pub const SIMULATION: u8 = 5;
    pub const IO: u8 = 6;
    pub const CHECK_FAILED: u8 = 7;
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable configuration or bad flag value.
    Parse(String),
    Core(aoii::Error),
    Io(String),
    /// The validation battery ran but some cells failed.
    CheckFailed(Vec<String>),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ConfigParse",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "Io",
            CliError::CheckFailed(_) => "ValidationFailed",
        }
    }

    fn exit_code(&self) -> u8 {
        use aoii::Error as E;
        match self {
            CliError::Parse(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::CheckFailed(_) => exit::CHECK_FAILED,
            CliError::Core(e) if e.is_validation() => exit::MODEL,
            CliError::Core(E::InvalidConfig(_)) => exit::CONFIG,
            CliError::Core(E::InvalidPolicy(_) | E::MinimumSampleSize { .. }) => exit::SIMULATION,
            CliError::Core(_) => exit::SOLVER,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Parse(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::CheckFailed(cells) => format!("failing cells: {}", cells.join(", ")),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Core(aoii::Error::RowSumViolation { row, sum }) => {
                err["row"] = json!(row);
                err["sum"] = json!(sum);
            }
            CliError::Core(aoii::Error::NegativeEntry { row, col, value }) => {
                err["row"] = json!(row);
                err["col"] = json!(col);
                err["value"] = json!(value);
            }
            CliError::CheckFailed(cells) => err["failing_cells"] = json!(cells),
            _ => {}
        }
        json!({ "schema_version": SCHEMA_VERSION, "error": err })
    }
}

impl From<aoii::Error> for CliError {
    fn from(e: aoii::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "aoii", version, about = "Optimal multi-threshold AoII policies: solver and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the SMDP by policy iteration for one lambda.
    Solve(SolveArgs),
    /// Simulate one policy slot by slot.
    Simulate(SimulateArgs),
    /// Compare SMDP, single-threshold and random-sampling policies over a lambda grid.
    Sweep(SweepArgs),
    /// Check closed-form cycle parameters against simulated cycles.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Built-in scenario: scenario1 or scenario2.
    #[arg(long)]
    scenario: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Largest threshold considered.
    #[arg(long)]
    tau_max: Option<u32>,
    /// Base seed (overrides AOII_SEED and the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Transmission cost weight.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lambda: Option<f64>,
    /// smdp | multi:<t1,..,tN> | uniform:<t> | rs:<xi>
    #[arg(long)]
    policy: Option<String>,
    /// Slots per replication.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Per-slot CSV dump of replication 0, relative to the output directory.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated subset of smdp,st,rs.
    #[arg(long)]
    policies: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Simulated cycles per (j, tau) cell.
    #[arg(long)]
    cycles: Option<u64>,
    /// Test hook: scale one closed-form entry before comparing, as
    /// `j,tau,quantity,factor` with one-based j.
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        scenario: c.scenario.clone(),
        tau_max: c.tau_max,
        seed: c.seed,
        out: c.out.clone(),
        ..Overrides::default()
    }
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    match &c.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let flags = Overrides {
                lambda: a.lambda,
                ..overrides(&a.common)
            };
            commands::solve(config::resolve(load(&a.common)?, flags)?)
        }
        Command::Simulate(a) => {
            let flags = Overrides {
                lambda: a.lambda,
                policy: a.policy,
                horizon: a.horizon,
                replications: a.replications,
                trace: a.trace,
                ..overrides(&a.common)
            };
            commands::simulate(config::resolve(load(&a.common)?, flags)?)
        }
        Command::Sweep(a) => {
            let flags = Overrides {
                policies: a.policies,
                horizon: a.horizon,
                replications: a.replications,
                ..overrides(&a.common)
            };
            commands::sweep(config::resolve(load(&a.common)?, flags)?)
        }
        Command::Validate(a) => {
            let flags = Overrides {
                cycles: a.cycles,
                ..overrides(&a.common)
            };
            let corrupt = a.corrupt.as_deref().map(commands::Corruption::parse).transpose()?;
            commands::validate(config::resolve(load(&a.common)?, flags)?, corrupt)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Parse(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
    }
}
