//! `twopoint`: encode, decode, evaluate and inspect oriented-box targets.
//!
//! Exit codes: 0 success, 1 threshold failure, 2 input error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{DecoderFlags, EncoderFlags, EvalFlags, SynthFlags};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Threshold(String),
}

impl From<twopoint_core::Error> for CliError {
    fn from(e: twopoint_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "twopoint", version, about = "Two-keypoint oriented box targets and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file overriding the built-in defaults; flags override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-image work.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode annotations (DOTA text, scene or dataset JSON) into plane files.
    Encode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Image size `WxH` for DOTA input; defaults to the annotation extent.
        #[arg(long)]
        image_size: Option<String>,
        /// Encode the valid lines of a DOTA file even if others are malformed.
        #[arg(long)]
        lenient: bool,
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Decode plane files into detections (JSON lines).
    Decode {
        planes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a DOTA-style text export.
        #[arg(long)]
        dota: Option<PathBuf>,
        /// Tile manifest written by `tile`; merges tile detections per image.
        #[arg(long)]
        tiles: Option<PathBuf>,
        #[command(flatten)]
        decoder: DecoderFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Encode and decode synthetic scenes and report recovery quality.
    Roundtrip {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-axis peak displacement in cells for slender instances.
        #[arg(long)]
        peak_jitter: Option<usize>,
        #[arg(long)]
        jitter_min_aspect: Option<f64>,
        /// Uniform direction noise half-width, degrees.
        #[arg(long)]
        direction_noise: Option<f64>,
        #[arg(long)]
        min_iou: Option<f64>,
        #[arg(long)]
        max_direction_err: Option<f64>,
        /// Always exit 0 once the report is written.
        #[arg(long)]
        report_only: bool,
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        decoder: DecoderFlags,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Per-class AP and mAP of detections against ground truth.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plain-text table output.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Split scenes into overlapping tiles.
    Tile {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tile_size: Option<usize>,
        #[arg(long)]
        gap: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Render heatmap planes as 8-bit binary PGM images, one per class.
    Render {
        planes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "center_hm")]
        plane: String,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Threshold(m)) => {
            eprintln!("threshold failure: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
