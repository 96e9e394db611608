use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swrl_cli::commands::{
    cmd_collect_offline, cmd_eval, cmd_plot, cmd_train, exit_code_for, load_config,
    resolve_workers, EvalAlgo, TrainAlgo,
};

/// Subspace-wise hybrid RL harness for articulated-object manipulation.
#[derive(Parser)]
#[command(name = "swrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write curves + checkpoint.
    Train {
        /// Configuration file (JSON). Defaults to the planar desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in preset name when no config file is given.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        algo: TrainAlgo,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Episode-budget override.
        #[arg(long)]
        episodes: Option<usize>,
        /// Worker pool size (SWRL_WORKERS overrides).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate a policy or baseline over the paired scenario protocol.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        algo: EvalAlgo,
        /// Checkpoint stem written by `train` (its `checkpoint` path without
        /// extension).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Emit one manipulability SVG per case.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Collect manual-baseline transitions into a binary dataset.
    CollectOffline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        episodes: usize,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render curves CSV or an evaluation report into SVG charts.
    Plot {
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), (i32, String)> {
    let cli = Cli::try_parse().map_err(|e| {
        let code = if e.use_stderr() { 2 } else { 0 };
        (code, e.to_string())
    })?;
    let fail = |e: swrl_core::Error| (exit_code_for(&e), e.to_string());
    match cli.command {
        Command::Train {
            config,
            preset,
            algo,
            out,
            seed,
            episodes,
            workers,
        } => {
            let cfg = load_config(config.as_deref(), preset.as_deref(), seed, episodes)
                .map_err(fail)?;
            let _ = resolve_workers(workers);
            cmd_train(&cfg, algo, &out).map_err(fail)?;
        }
        Command::Eval {
            config,
            preset,
            algo,
            checkpoint,
            out,
            seed,
            plot,
            workers,
        } => {
            let cfg =
                load_config(config.as_deref(), preset.as_deref(), seed, None).map_err(fail)?;
            let workers = resolve_workers(workers);
            cmd_eval(&cfg, algo, checkpoint.as_deref(), &out, plot, workers).map_err(fail)?;
        }
        Command::CollectOffline {
            config,
            preset,
            episodes,
            out,
            seed,
        } => {
            let cfg =
                load_config(config.as_deref(), preset.as_deref(), seed, None).map_err(fail)?;
            cmd_collect_offline(&cfg, episodes, &out).map_err(fail)?;
        }
        Command::Plot { curves, report, out } => {
            cmd_plot(curves.as_deref(), report.as_deref(), &out).map_err(fail)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((0, message)) => {
            print!("{message}");
            ExitCode::SUCCESS
        }
        Err((code, message)) => {
            eprintln!("{message}");
            ExitCode::from(code as u8)
        }
    }
}
