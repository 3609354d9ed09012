//! `gespi`: simulation harnesses, one-shot procedures and oracles.

mod oneshot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gespi_core::io::{emit_results, parse_config, parse_config_str, render, Format};
use gespi_core::sim::run_experiment;
use gespi_core::Task;

#[derive(Parser, Debug)]
#[command(
    name = "gespi",
    version,
    about = "Synthetic-powered inference with a real-data guardrail"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Write results here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv, global = true)]
    format: OutFormat,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, env = "GESPI_WORKERS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    workers: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte-Carlo experiment and emit its metrics table.
    Simulate {
        #[arg(value_enum)]
        task: SimTask,
        /// JSON configuration; absent keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Split-conformal thresholds from score files.
    Conformal(oneshot::ConformalArgs),
    /// Conformal risk control from risk-grid files.
    Crc(oneshot::CrcArgs),
    /// Single hypothesis tests.
    Test {
        #[command(subcommand)]
        test: oneshot::TestCommand,
    },
    /// Multiple testing on p-value files.
    Mt(oneshot::MtArgs),
    /// Closed-form and Monte-Carlo oracles.
    Oracle {
        #[command(subcommand)]
        oracle: oneshot::OracleCommand,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SimTask {
    Binomial,
    Winrate,
    Outlier,
    OutlierFwer,
    Conformal,
    Crc,
    TwoSample,
}

impl From<SimTask> for Task {
    fn from(t: SimTask) -> Self {
        match t {
            SimTask::Binomial => Task::BinomialTest,
            SimTask::Winrate => Task::WinRate,
            SimTask::Outlier => Task::OutlierSingle,
            SimTask::OutlierFwer => Task::OutlierFWER,
            SimTask::Conformal => Task::Conformal,
            SimTask::Crc => Task::RiskControl,
            SimTask::TwoSample => Task::TwoSample,
        }
    }
}

fn simulate(g: &Global, task: SimTask, config: Option<&PathBuf>) -> Result<()> {
    let mut spec = match config {
        Some(path) => parse_config(path, task.into())?,
        None => parse_config_str("{}", task.into())?,
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let table = run_experiment(&spec)?;
    match &g.output {
        Some(path) => emit_results(&table, path, g.format.into())?,
        None => oneshot::write_stdout(&render(&table, g.format.into())?)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(usize::try_from(cli.global.workers).context("worker count")?)
        .build()
        .context("building the worker pool")?;
    let g = &cli.global;
    pool.install(|| match &cli.command {
        Command::Simulate { task, config } => simulate(g, *task, config.as_ref()),
        Command::Conformal(a) => oneshot::conformal(g, a),
        Command::Crc(a) => oneshot::crc(g, a),
        Command::Test { test } => oneshot::test(g, test),
        Command::Mt(a) => oneshot::mt(g, a),
        Command::Oracle { oracle } => oneshot::oracle(g, oracle),
    })
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn diagnostic(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", diagnostic(&e));
            ExitCode::FAILURE
        }
    }
}
