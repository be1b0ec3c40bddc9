//! `groundrl`: score sampled responses, estimate difficulty, select training
//! subsets, run toy GRPO simulations and print reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groundrl_core::TaskKind;

#[derive(Parser)]
#[command(name = "groundrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every sampled response of a corpus and write reward breakdowns.
    Score(IoArgs),
    /// Summarize repeated samples into per-item difficulty records.
    Estimate(EstimateArgs),
    /// Draw a balanced training subset from difficulty records.
    Select(ConfiguredArgs),
    /// Run GRPO on a synthetic tabular corpus and write learning curves.
    Simulate(SimulateArgs),
    /// Print histograms, metric tables or curve summaries for JSONL files.
    Report(ReportArgs),
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Only process records of this task.
    #[arg(long)]
    task: Option<TaskKind>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    io: IoArgs,
    /// TOML file with difficulty thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ConfiguredArgs {
    #[command(flatten)]
    io: IoArgs,
    /// TOML file whose keys mirror the configuration struct.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    task: Option<TaskKind>,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more JSONL files; the kind of each is detected from its keys.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(a) => commands::score(&a.input, &a.output, a.task),
        Command::Estimate(a) => commands::estimate(&a.io.input, &a.io.output, a.io.task, a.config.as_deref()),
        Command::Select(a) => commands::select(&a.io.input, &a.io.output, a.io.task, a.config.as_deref(), a.seed),
        Command::Simulate(a) => commands::simulate(&a.output, a.config.as_deref(), a.seed, a.task),
        Command::Report(a) => commands::report(&a.input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
