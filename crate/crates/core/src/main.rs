use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use sibfix::orchestrator::{self, Mode, Overrides};

#[derive(Parser)]
#[command(name = "repair", version, about = "Sibling-aware multi-hunk program repair")]
struct Cli {
    /// More output; repeat for debug logging.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair the project described by a descriptor file.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    descriptor: PathBuf,
    /// Fault localization mode; overrides the descriptor.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Embedding similarity threshold.
    #[arg(long)]
    theta: Option<f64>,
    /// Jaccard threshold for joint repair.
    #[arg(long)]
    alpha: Option<f64>,
    /// Model requests per phase.
    #[arg(long)]
    attempts: Option<u32>,
    /// Ranked fix ingredients per sibling line.
    #[arg(long)]
    ingredients: Option<usize>,
    /// Wall-clock budget, e.g. `5h` or `90s`.
    #[arg(long, value_parser = humantime::parse_duration)]
    budget: Option<Duration>,
    #[arg(long)]
    stop_on_first_plausible: bool,
    /// Keep every patched workspace under the run directory.
    #[arg(long)]
    keep_workspaces: bool,
    /// Parent directory for run output (default: `repair-runs` next to the descriptor).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay the recorded responses of an earlier run directory.
    #[arg(long)]
    replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();

    let Command::Run(args) = cli.command;
    let overrides = Overrides {
        mode: args.mode,
        theta: args.theta,
        alpha: args.alpha,
        attempts: args.attempts,
        ingredients: args.ingredients,
        budget: args.budget,
        stop_on_first_plausible: args.stop_on_first_plausible,
        keep_workspaces: args.keep_workspaces,
        out: args.out,
        replay: args.replay,
    };
    match orchestrator::run(&args.descriptor, &overrides) {
        Ok(outcome) => {
            if let Some(report) = &outcome.report {
                for p in &report.plausible {
                    print!("{}", p.diff);
                }
                eprintln!(
                    "{:?}: {} plausible, {} requests; report in {}",
                    report.termination,
                    report.plausible.len(),
                    report.requests,
                    outcome.run_dir.display()
                );
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
