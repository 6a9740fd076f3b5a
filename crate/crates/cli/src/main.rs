mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use modfx::Error;

/// Train and run differentiable flanger / chorus / phaser models.
#[derive(Debug, Parser)]
#[command(name = "modfx", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Config file (TOML); flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $MODFX_OUT_DIR or ./modfx-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Default sizes: desk or paper.
    #[arg(long, global = true)]
    pub profile: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a kernel and the framed training input built from it.
    Gen(GenArgs),
    /// Apply a toy flanger or phaser to a WAV file.
    MakeTarget(MakeTargetArgs),
    /// Train one or more seeds on an input/target pair.
    Train(TrainArgs),
    /// Score a trained model on a validation pair.
    Validate(ValidateArgs),
    /// Render a WAV through a trained model.
    Infer(InferArgs),
    /// Loss-surface and descent studies.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub kind: String,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long = "Nprime")]
    pub n_prime: Option<usize>,
    /// Total length L in samples.
    #[arg(long)]
    pub length: Option<usize>,
    /// Also render a toy target from the framed input.
    #[arg(long)]
    pub toy: Option<String>,
    /// Also write a plucked-string validation signal (and its toy target).
    #[arg(long)]
    pub validation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MakeTargetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub lfo_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub val_input: Option<PathBuf>,
    #[arg(long)]
    pub val_target: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long = "K")]
    pub sections: Option<u32>,
    #[arg(long)]
    pub fb_config: Option<String>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "Nprime")]
    pub n_prime: Option<usize>,
    #[arg(long)]
    pub input_kind: Option<String>,
    #[arg(long)]
    pub preemphasis: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Concurrent seeds (0 = one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Search the LFO start frame during validation.
    #[arg(long)]
    pub align: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub align: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub rate_scale: f64,
    /// Interpolate the frame-rate control directly instead of using a wavetable.
    #[arg(long)]
    pub frame_interp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeKind {
    Gamma,
    DelaySurface,
    ApfSurface,
    Descend,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(value_enum)]
    pub kind: AnalyzeKind,
    #[arg(long = "N", default_value_t = 256)]
    pub n: usize,
    /// Input spectrum: `flat` or `tri`.
    #[arg(long, default_value = "flat")]
    pub kernel: String,
    #[arg(long = "Nprime")]
    pub n_prime: Option<usize>,
    #[arg(long = "D", default_value_t = 100.0)]
    pub d: f64,
    #[arg(long = "D0", default_value_t = 80.0)]
    pub d0: f64,
    #[arg(long = "K", default_value_t = 4)]
    pub sections: u32,
    /// Target pole for the all-pass surface.
    #[arg(long, default_value_t = 0.5)]
    pub pole: f64,
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
    #[arg(long, default_value_t = modfx::analysis::DESCENT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = modfx::analysis::DESCENT_LR)]
    pub lr: f64,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::Parse { .. } | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
