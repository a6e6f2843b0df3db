use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tgcn_mot::cli;

#[derive(Parser)]
#[command(
    name = "tgcn-mot",
    about = "Tracking-by-detection with a velocity-augmented Kalman filter and a temporal GCN appearance predictor",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link detections into tracks and write a MOT result file
    Track {
        /// Detection file (repeat for multiple sequences)
        #[arg(long = "det", required = true)]
        det: Vec<PathBuf>,
        /// Embedding sidecar file, one per detection file
        #[arg(long = "emb", required = true)]
        emb: Vec<PathBuf>,
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// key = value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output result file, one per detection file
        #[arg(long = "out", required = true)]
        out: Vec<PathBuf>,
        /// Embedding dimension; must match the model
        #[arg(long)]
        dim: Option<usize>,
        /// Worker threads across sequences
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the appearance predictor and write the model file
    Train {
        /// Embedding file to build sliding-window pairs from
        #[arg(long)]
        emb: Option<PathBuf>,
        /// Synthetic pair source (periodic_features)
        #[arg(long)]
        scenario: Option<String>,
        /// Frames to synthesize when using --scenario
        #[arg(long)]
        frames: Option<u32>,
        /// Seed for weight initialization (overrides the config file)
        #[arg(long)]
        seed: Option<u64>,
        /// Feature dimension (overrides the config file)
        #[arg(long)]
        dim: Option<usize>,
        /// key = value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model file
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a result file against ground truth
    Eval {
        /// Ground-truth file
        #[arg(long)]
        gt: PathBuf,
        /// Tracker result file
        #[arg(long)]
        result: PathBuf,
        /// Matching threshold on IoU
        #[arg(long = "iou-threshold", default_value_t = 0.5)]
        iou_threshold: f64,
    },
    /// Generate synthetic detection/embedding/ground-truth files
    Synth {
        /// Scenario: crossing, parallel or periodic_features
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 40)]
        frames: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature dimension of the generated embeddings
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Pixel jitter on generated detection boxes
        #[arg(long = "noise-std", default_value_t = 0.05)]
        noise_std: f64,
        /// Directory for det.txt, emb.txt and gt.txt
        #[arg(long = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::Track {
            det,
            emb,
            model,
            config,
            out,
            dim,
            jobs,
        } => cli::cmd_track(det, emb, model, config.as_deref(), out, *dim, *jobs),
        Command::Train {
            emb,
            scenario,
            frames,
            seed,
            dim,
            config,
            out,
        } => cli::cmd_train(
            emb.as_deref(),
            scenario.as_deref(),
            *frames,
            *seed,
            *dim,
            config.as_deref(),
            out,
        ),
        Command::Eval {
            gt,
            result,
            iou_threshold,
        } => cli::cmd_eval(gt, result, *iou_threshold),
        Command::Synth {
            scenario,
            frames,
            seed,
            dim,
            noise_std,
            out,
        } => cli::cmd_synth(scenario, *frames, *seed, *dim, *noise_std, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
