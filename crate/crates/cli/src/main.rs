mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "idmotion", version, about = "Identity-preserving 2D skeleton motion retargeting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    OpenposeJsonDir,
    ClipContainer,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GanForm {
    Lsgan,
    Log,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (clips plus manifest.csv).
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean, pad, trim and normalize raw keypoint sequences into clips.
    Preprocess {
        /// One input per subject; repeat for several.
        #[arg(long, required = true)]
        source: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "openpose-json-dir")]
        format: InputFormat,
        /// Content label shared by aligned performances.
        #[arg(long)]
        content: Option<String>,
        /// Identities (by label) placed in the test split.
        #[arg(long)]
        test_id: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset manifest, writing checkpoint.bin and metrics.jsonl.
    Train {
        /// Dataset manifest (manifest.csv).
        #[arg(long)]
        source: PathBuf,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum)]
        gan_form: Option<GanForm>,
    },
    /// Perform the content of --source with the identity of --target.
    Retarget {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gallery/probe identity-transfer evaluation.
    EvalIdscore {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest whose train split fits the embedder and whose test
        /// split provides gallery, probes and the new subject.
        #[arg(long)]
        source: PathBuf,
        /// Identity transferred onto every probe; defaults to the last
        /// test identity.
        #[arg(long)]
        target: Option<String>,
        /// `baseline` or `external:<program>`.
        #[arg(long, default_value = "baseline")]
        embedder: String,
        /// Report path; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw each frame of a clip as a stick figure PNG.
    Render {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        size: Option<u32>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
