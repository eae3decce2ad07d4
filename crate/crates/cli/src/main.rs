//! `bdqsd`: decay parameters, quasi-stationary distributions, Lyapunov
//! certificates and Fleming-Viot bias experiments for birth-and-death
//! processes absorbed at 0.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 numeric failure,
//! 4 diagnostic failure under `--strict`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BiasArgs, FvArgs, LyapunovArgs, QsdArgs, SemigroupArgs, Xi1Args};
use config::{ConfigFile, ModelArgs};

#[derive(Parser)]
#[command(name = "bdqsd", version, about = "Quasi-stationary distributions of birth-and-death processes")]
struct Cli {
    /// TOML file with a [model] section and one section per command, or a
    /// JSON artifact written by --out. Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replica-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exit with code 4 when a diagnostic fails (stationarity, certificate,
    /// two-level disagreement).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay parameter by bisection, cross-checked against the truncated generator.
    Xi1 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: Xi1Args,
    },
    /// A member of the QSD family, by default the minimal QSD.
    Qsd {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: QsdArgs,
    },
    /// One Fleming-Viot particle run.
    Fv {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: FvArgs,
    },
    /// Bias of the Fleming-Viot estimator against a reference QSD, per N.
    BiasTable {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: BiasArgs,
    },
    /// Check a Lyapunov drift inequality.
    Lyapunov {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: LyapunovArgs,
    },
    /// Law at time t conditioned on survival.
    Semigroup {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: SemigroupArgs,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(bdqsd::Error),
}

impl From<bdqsd::Error> for CliError {
    fn from(e: bdqsd::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

pub struct Context {
    pub config: ConfigFile,
    pub strict: bool,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = Context {
        config: match &cli.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        },
        strict: cli.strict,
    };
    match &cli.command {
        Command::Xi1 { model, args } => commands::xi1(&ctx, model, args),
        Command::Qsd { model, args } => commands::qsd(&ctx, model, args),
        Command::Fv { model, args } => commands::fv(&ctx, model, args),
        Command::BiasTable { model, args } => commands::bias_table(&ctx, model, args),
        Command::Lyapunov { model, args } => commands::lyapunov(&ctx, model, args),
        Command::Semigroup { model, args } => commands::semigroup(&ctx, model, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => {
            if code == 4 {
                eprintln!("error: diagnostic failed (--strict)");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
