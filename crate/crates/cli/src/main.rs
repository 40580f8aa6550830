//! `foveacast`: corpus generation, training, evaluation, gate inspection and
//! latency benchmarking.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use foveacast_core::datapipe::DataError;
use foveacast_core::metrics::MetricsError;
use foveacast_core::model::ModelError;
use foveacast_core::synthgen::{ScenePreset, SynthError};
use foveacast_core::train::TrainError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_CORRUPT: u8 = 5;

/// Invalid flag values or inconsistent configuration.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "foveacast", version, about = "Multimodal gaze forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of traces, scene inputs and a split manifest.
    Gen(GenArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a corpus.
    Eval(EvalArgs),
    /// Time single-window inference.
    Bench(BenchArgs),
    /// Dump per-window fusion gates with summaries.
    InspectGates(GatesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Bouncing,
    Crossing,
}

impl From<PresetArg> for ScenePreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Bouncing => ScenePreset::Bouncing,
            PresetArg::Crossing => ScenePreset::Crossing,
        }
    }
}

fn parse_split(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated counts, e.g. 18,2,2".into()),
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// JSON synth config (or a run.json from an earlier `gen`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Sessions per scene.
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Session length in seconds.
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// Fixed head lead in milliseconds (overrides the range).
    #[arg(long)]
    pub lead_ms: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Scene counts for train,val,test.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<(usize, usize, usize)>,
    #[arg(long)]
    pub image_side: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON with optional `model`, `train` and `dtype` sections, or a run.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (or a checkpoint inside it) to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lambda_aux: Option<f64>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
    /// Train the conv scene encoder on the corpus images instead of precomputed features.
    #[arg(long)]
    pub conv_scene: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Hit radius in normalized units.
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    /// Replace head inputs with zeros.
    #[arg(long)]
    pub zero_head: bool,
    /// Also write per-window predictions.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Checkpoint to time; without it a freshly initialized model is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON model config for the uncheckpointed case.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    /// Concurrent benchmark threads, each with its own model copy.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
}

#[derive(Args, Debug)]
pub struct GatesArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Group label for the summary; defaults to the corpus preset.
    #[arg(long)]
    pub label: Option<String>,
}

fn data_code(e: &DataError) -> Option<u8> {
    match e {
        DataError::CountMismatch { .. } => Some(EXIT_USAGE),
        DataError::Geometry(_) => None,
        _ => Some(EXIT_IO),
    }
}

fn model_code(e: &ModelError) -> Option<u8> {
    match e {
        ModelError::NonFinite(_) => Some(EXIT_NUMERIC),
        ModelError::InvalidConfig(_) | ModelError::ModeMismatch { .. } | ModelError::EmptyBatch => Some(EXIT_USAGE),
        _ => None,
    }
}

/// Maps an error chain onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if cause.is::<Usage>() {
            Some(EXIT_USAGE)
        } else if let Some(e) = cause.downcast_ref::<TrainError>() {
            match e {
                TrainError::Io { .. } => Some(EXIT_IO),
                TrainError::VersionMismatch { .. } | TrainError::CorruptManifest(_) | TrainError::ShapeMismatch { .. } => {
                    Some(EXIT_CORRUPT)
                }
                TrainError::NonFiniteLoss { .. } => Some(EXIT_NUMERIC),
                TrainError::InvalidConfig(_) => Some(EXIT_USAGE),
                TrainError::Model(m) => model_code(m),
                TrainError::Data(d) => data_code(d),
            }
        } else if let Some(e) = cause.downcast_ref::<SynthError>() {
            match e {
                SynthError::InvalidConfig(_) => Some(EXIT_USAGE),
                SynthError::Data(d) => data_code(d),
            }
        } else if let Some(e) = cause.downcast_ref::<MetricsError>() {
            match e {
                MetricsError::Io { .. } => Some(EXIT_IO),
                MetricsError::EmptyInput | MetricsError::StepMismatch(..) => Some(EXIT_USAGE),
                MetricsError::Model(m) => model_code(m),
                MetricsError::Data(d) => data_code(d),
            }
        } else if let Some(e) = cause.downcast_ref::<DataError>() {
            data_code(e)
        } else if let Some(e) = cause.downcast_ref::<ModelError>() {
            model_code(e)
        } else if cause.is::<std::io::Error>() {
            Some(EXIT_IO)
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::InspectGates(a) => commands::inspect_gates(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
