//! `weakkam`: experiment runner for the weak KAM toolkit.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error, 3
//! configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weakkam::Execution;

use crate::config::RunConfig;
use crate::output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl From<weakkam::Error> for CliError {
    fn from(e: weakkam::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Weak KAM toolkit for proper Hamilton-Jacobi equations on the circle")]
struct Cli {
    /// TOML configuration, or a `manifest.json` of an earlier run.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set grid.n=256`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for node-parallel sweeps; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Check the structural hypotheses, the Legendre involution and the partials.
    Validate,
    /// Solve the Cauchy problem up to `run.t_end`.
    Evolve,
    /// Run to a stationary state and build the limsup fixed point.
    Stationary,
    /// Integrate a fan of characteristics.
    Characteristics,
    /// Find the level `alpha` at which the critical value vanishes.
    CriticalValue,
    /// Compare the semigroup with the Lax-Friedrichs scheme.
    OracleCompare,
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Evolve => "evolve",
            Command::Stationary => "stationary",
            Command::Characteristics => "characteristics",
            Command::CriticalValue => "critical-value",
            Command::OracleCompare => "oracle-compare",
            Command::Replay { .. } => "replay",
        }
    }

    fn from_name(name: &str) -> Option<Command> {
        Some(match name {
            "validate" => Command::Validate,
            "evolve" => Command::Evolve,
            "stationary" => Command::Stationary,
            "characteristics" => Command::Characteristics,
            "critical-value" => Command::CriticalValue,
            "oracle-compare" => Command::OracleCompare,
            _ => return None,
        })
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the parallel feature; running sequentially");
            Ok(Execution::Sequential)
        }
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, config_path) = match &cli.command {
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(manifest)
                .map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
            let name = value.get("command").and_then(|c| c.as_str()).unwrap_or_default();
            let cmd = Command::from_name(name)
                .ok_or_else(|| CliError::Config(format!("manifest names unknown command {name:?}")))?;
            (cmd, Some(manifest.clone()))
        }
        other => (other.clone(), cli.config.clone()),
    };
    let check_only = matches!(command, Command::Validate);
    let mut cfg = RunConfig::load(config_path.as_deref(), &cli.set, check_only)?;
    if let Some(dir) = &cli.out {
        cfg.output.directory = dir.clone();
    }
    let exec = configure_threads(cli.threads)?;
    let mut out = Output::create(&cfg.output.directory)?;
    log::info!("{} -> {}", command.name(), cfg.output.directory.display());

    let result = match command {
        Command::Validate => commands::validate(&cfg, &mut out),
        Command::Evolve => commands::evolve_cmd(&cfg, exec, &mut out),
        Command::Stationary => commands::stationary(&cfg, exec, &mut out),
        Command::Characteristics => commands::characteristics(&cfg, exec, &mut out),
        Command::CriticalValue => commands::critical(&cfg, &mut out),
        Command::OracleCompare => commands::oracle_compare(&cfg, exec, &mut out),
        Command::Replay { .. } => unreachable!("resolved above"),
    };
    let (status, summary, outcome) = match result {
        Ok(o) => match o.failure {
            None => ("ok", o.summary, Ok(())),
            Some(f) => ("validation_failed", o.summary, Err(CliError::Validation(f))),
        },
        Err(e) => ("error", serde_json::json!({ "error": e.to_string() }), Err(e)),
    };
    out.finish(command.name(), &cfg, cli.threads, status, summary)?;
    outcome
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
