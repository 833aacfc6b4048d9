use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dasmr_cli::commands::{self, TrainArgs};
use dasmr_core::eval::SeedMode;

#[derive(Parser)]
#[command(name = "dasmr", version, about = "Train and evaluate goal-reaching policies for a double-Ackermann robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Seen,
    Unseen,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write logs and checkpoints to the run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        total_steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's deterministic policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the checkpoint config's eval.episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum, default_value = "seen")]
        seed_mode: Mode,
        /// Report directory; defaults to eval_<mode> next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode toward a fixed goal and write its trace.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        goal: Vec<f64>,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Draw a trace as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, total_steps, out, resume } => {
            let dir = commands::train(&TrainArgs { config, seed, total_steps, out, resume })?;
            println!("run directory: {}", dir.display());
        }
        Command::Eval { checkpoint, episodes, seed_mode, out } => {
            let mode = match seed_mode {
                Mode::Seen => SeedMode::Seen,
                Mode::Unseen => SeedMode::Unseen,
            };
            let (_, dir) = commands::eval(&checkpoint, episodes, mode, out.as_deref())?;
            println!("report: {}", dir.join("report.json").display());
        }
        Command::Rollout { checkpoint, goal, trace } => {
            commands::rollout(&checkpoint, [goal[0], goal[1]], &trace)?;
        }
        Command::Plot { trace, out } => commands::plot(&trace, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
