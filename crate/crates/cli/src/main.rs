use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use uora_cli::{cmd_params, cmd_replay, cmd_report, cmd_run, RunOverrides};

/// Parameter-efficient fine-tuning toolkit: LoRA/VeRA/UORA adapters with
/// an interpolation-based reinitialization engine and a desk-scale
/// experiment harness.
#[derive(Parser)]
#[command(name = "uora", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config: every grid cell x seed, with per-run
    /// metrics, manifests, and a summary table.
    Run {
        /// Experiment config file (TOML).
        #[arg(long, env = "UORA_CONFIG")]
        config: PathBuf,
        /// Output directory (overrides run.out_dir).
        #[arg(long, env = "UORA_OUT")]
        out: Option<PathBuf>,
        /// Comma-separated seed list (overrides run.seeds).
        #[arg(long, env = "UORA_SEEDS", value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Add or replace a grid axis: KEY=V1,V2 (repeatable).
        #[arg(long = "grid", value_name = "KEY=V1,V2")]
        grid: Vec<String>,
        /// Per-run metrics format: csv or jsonl.
        #[arg(long, env = "UORA_FORMAT")]
        format: Option<String>,
    },
    /// Exact trainable-parameter count for a method/layout.
    Params {
        /// Adapter method: lora, vera, or uora.
        method: String,
        /// Number of adapted projection matrices.
        l_tuned: u64,
        /// Width of each adapted projection.
        d_model: u64,
        /// Adapter rank.
        r: u64,
    },
    /// Verify a checkpoint by replaying its seed + event log against
    /// the embedded checksums.
    Replay {
        /// Checkpoint file written by the toolkit.
        checkpoint: PathBuf,
    },
    /// Recompute the summary table of a finished experiment directory.
    Report {
        /// Experiment output directory.
        #[arg(long, env = "UORA_OUT")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            grid,
            format,
        } => cmd_run(
            &config,
            &RunOverrides {
                out,
                seeds,
                grid,
                format,
            },
        )
        .map(|(_, text)| text),
        Command::Params {
            method,
            l_tuned,
            d_model,
            r,
        } => cmd_params(&method, l_tuned, d_model, r),
        Command::Replay { checkpoint } => cmd_replay(&checkpoint),
        Command::Report { out } => cmd_report(&out),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
