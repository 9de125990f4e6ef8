//! `hra`: load a catalog of CSV tables, turn questions into hybrid queries,
//! optimize them, and run them against an LLM backend.

mod bench;
mod calibrate;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::GlobalArgs;

#[derive(Debug, Parser)]
#[command(name = "hra", version, about = "Hybrid relational algebra queries with LLM functions")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the catalog and build the semantic data model.
    Ingest(commands::IngestArgs),
    /// Generate a query for a natural-language question.
    Generate(commands::GenerateArgs),
    /// Show the original and optimized plans with their costs.
    Explain(commands::ExplainArgs),
    /// Generate (for questions), optimize, and execute a query.
    Run(commands::RunArgs),
    /// Run a suite of queries in several configurations and report calls, tokens, and time.
    Bench(bench::BenchArgs),
    /// Time probe calls per UDF kind and suggest a per-call cost coefficient.
    Calibrate(calibrate::CalibrateArgs),
}

/// Failures grouped by pipeline phase; each phase has its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Ingest(#[from] hra_core::catalog::IngestError),
    #[error("{0}")]
    Generation(String),
    #[error("{0}")]
    Optimization(String),
    #[error("{0}")]
    Execution(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Ingest(_) => 1,
            CliError::Generation(_) => 2,
            CliError::Optimization(_) => 3,
            CliError::Execution(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = config::RunConfig::resolve(&cli.global).and_then(|config| match cli.command {
        Command::Ingest(a) => commands::ingest(&config, &a),
        Command::Generate(a) => commands::generate(&config, &a),
        Command::Explain(a) => commands::explain(&config, &a),
        Command::Run(a) => commands::run(&config, &a),
        Command::Bench(a) => bench::bench(&config, &a),
        Command::Calibrate(a) => calibrate::calibrate(&config, &a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_per_phase() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Generation(String::new()).exit_code(), 2);
        assert_eq!(CliError::Optimization(String::new()).exit_code(), 3);
        assert_eq!(CliError::Execution(String::new()).exit_code(), 4);
    }
}
