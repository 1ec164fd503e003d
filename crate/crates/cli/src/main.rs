mod archive;
mod commands;
mod config;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Localization-by-grid tracker: dataset preparation, training, tracking
/// evaluation and cross-tracker comparison.
#[derive(Parser)]
#[command(name = "gridloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory (overrides [output].dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a training-sample archive from an annotated dataset.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Random placement seed (overrides [prepare].seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Crop window side as a multiple of the box side.
        #[arg(long)]
        window_scale: Option<f64>,
        /// Crops synthesized per annotated frame.
        #[arg(long)]
        samples_per_frame: Option<usize>,
        /// Archive directory (overrides [prepare].archive_dir).
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Train on a prepared archive and write checkpoints plus a report.
    Train {
        #[command(flatten)]
        common: Common,
        /// Archive directory (overrides [prepare].archive_dir).
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        init_seed: Option<u64>,
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Track the configured sequence and emit IoU reports.
    Track {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Initial box "x,y,w,h"; defaults to the first ground-truth box.
        #[arg(long, value_name = "X,Y,W,H")]
        init_box: Option<String>,
        /// Monte-Carlo re-initialization runs (overrides [eval].runs).
        #[arg(long)]
        runs: Option<usize>,
        /// Initialization jitter fraction (overrides [eval].jitter).
        #[arg(long)]
        jitter: Option<f64>,
        /// Search window scale (overrides [tracker].window_scale).
        #[arg(long)]
        window_scale: Option<f64>,
    },
    /// Merge our IoU series with external tracker box series.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Our eval CSV (frame_index,iou) as written by `track`.
        #[arg(long, value_name = "FILE")]
        ours: PathBuf,
        /// External series as NAME=PATH with CSV rows frame_index,x,y,w,h.
        #[arg(long = "external", value_name = "NAME=PATH")]
        externals: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare {
            common,
            seed,
            window_scale,
            samples_per_frame,
            archive,
        } => commands::prepare(common, seed, window_scale, samples_per_frame, archive),
        Command::Train {
            common,
            archive,
            epochs,
            learning_rate,
            batch_size,
            init_seed,
            shuffle_seed,
            checkpoint_every,
        } => commands::train(
            common,
            archive,
            epochs,
            learning_rate,
            batch_size,
            init_seed,
            shuffle_seed,
            checkpoint_every,
        ),
        Command::Track {
            common,
            checkpoint,
            init_box,
            runs,
            jitter,
            window_scale,
        } => commands::track(common, checkpoint, init_box, runs, jitter, window_scale),
        Command::Compare {
            common,
            ours,
            externals,
        } => commands::compare(common, ours, externals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
