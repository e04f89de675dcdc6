//! Command-line surface over `mobility-core`: preprocessing, codebook
//! training, tokenization, embedding alignment, corpus export, evaluation,
//! reward scoring and refinement. Every command writes a manifest.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod manifest;

/// Bad flags, config or invocation. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Exit code for a failed run: usage 1, data 2, numerical 3.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<mobility_core::Error>() {
            return match e {
                mobility_core::Error::Numerical(_) => EXIT_NUMERICAL,
                mobility_core::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

#[derive(Debug, Parser)]
#[command(name = "mobility", version, about = "Location tokenization, trajectory features and refinement for mobility data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for all randomness; overrides the config file [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file; command-line flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Fail on the first malformed input record instead of skipping it
    #[arg(long, global = true)]
    pub strict: bool,
    /// Directory for outputs and the run manifest
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid, bin and window raw visits into trajectories.jsonl
    Preprocess(PreprocessArgs),
    /// Train the residual-quantized codebooks (codebook.rqcb)
    BuildCodebook(CodebookArgs),
    /// Assign token sequences to locations (locations.jsonl)
    Tokenize(TokenizeArgs),
    /// Align token embeddings with location semantics (embeddings.tkem)
    Align(AlignArgs),
    /// Write the instruction-tuning corpora
    ExportSft(ExportArgs),
    /// Compare generated and true trajectories (eval_report.json)
    Evaluate(EvaluateArgs),
    /// Score generated trajectories and compute group advantages
    Reward(RewardArgs),
    /// Minimal-edit refinement of next-day trajectories
    Refine(RefineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    /// Raw visits, one {user_id, timestamp, lat, lon} per line
    #[arg(long)]
    pub visits: PathBuf,
    /// City extent and UTC offset (TOML); falls back to [city] in the config
    #[arg(long)]
    pub city: Option<PathBuf>,
    /// Grid cell size in meters [default: 500]
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Days per window [default: 3]
    #[arg(long)]
    pub window_days: Option<u32>,
    /// Days between window starts [default: 1]
    #[arg(long)]
    pub stride_days: Option<u32>,
    /// Windows with fewer points are dropped [default: 5]
    #[arg(long)]
    pub min_points: Option<usize>,
    /// Longer windows keep their latest points [default: 145]
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Keep consecutive repeats of the same slot and cell
    #[arg(long)]
    pub no_dedupe: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CodebookArgs {
    /// Semantic vectors, one {location_id, values} per line
    #[arg(long, required_unless_present = "profiles")]
    pub embeddings: Option<PathBuf>,
    /// Location profiles; encoded with the built-in fallback when no
    /// embeddings are given
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Number of quantization layers [default: 4]
    #[arg(long)]
    pub n_layers: Option<usize>,
    /// Codewords per layer [default: 512]
    #[arg(long)]
    pub codebook_size: Option<usize>,
    /// Codeword dimension, also the last encoder width [default: 64]
    #[arg(long)]
    pub code_dim: Option<usize>,
    /// Encoder widths from input to code [default: 2048,1024,512,256,128,64]
    #[arg(long, value_delimiter = ',')]
    pub encoder_dims: Option<Vec<usize>>,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// AdamW learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 1024]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Commitment weight [default: 0.25]
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TokenizeArgs {
    /// Trained codebook artifact
    #[arg(long)]
    pub codebook: PathBuf,
    /// Location profiles
    #[arg(long)]
    pub profiles: PathBuf,
    /// Imported semantic vectors; the fallback encoder is used otherwise
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// City extent (TOML); falls back to [city] in the config
    #[arg(long)]
    pub city: Option<PathBuf>,
    /// Grid cell size in meters [default: 500]
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Trajectories to annotate with tokens (trajectories_tokenized.jsonl)
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    /// Trained codebook artifact
    #[arg(long)]
    pub codebook: PathBuf,
    /// Output of `tokenize`
    #[arg(long)]
    pub locations: PathBuf,
    /// Location profiles, for fallback semantic targets
    #[arg(long, required_unless_present = "embeddings")]
    pub profiles: Option<PathBuf>,
    /// Imported semantic vectors used as targets
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Base-vocabulary table, one {piece, values} per line; hashed
    /// embedder otherwise
    #[arg(long)]
    pub piece_table: Option<PathBuf>,
    /// Hashed embedder width [default: 64]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Weight of the drift penalty [default: 0.1]
    #[arg(long)]
    pub lambda_prior: Option<f64>,
    /// Weight of the co-occurrence term [default: 0.01]
    #[arg(long)]
    pub lambda_coh: Option<f64>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epochs [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 256]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Co-occurrence neighborhood radius in cells [default: 1]
    #[arg(long)]
    pub radius: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Geo,
    Prediction,
    Generation,
    Reflection,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Which corpus to write
    #[arg(long, value_enum, default_value = "all")]
    pub kind: ExportKind,
    /// Output of `tokenize` (geo corpus)
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Location profiles (geo corpus)
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Trajectory windows, ideally tokenized (other corpora)
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// Opaque sequence vectors, one {sample_id, values} per line
    #[arg(long)]
    pub sequences: Option<PathBuf>,
    /// Generated next-day trajectories to critique, one {sample_id, points}
    /// per line; repeating the last history day otherwise
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    /// Maximum edits per reflection example [default: 10]
    #[arg(long)]
    pub budget: Option<usize>,
    /// Candidates kept per refinement step [default: 1]
    #[arg(long)]
    pub beam_width: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Pooled,
    PerUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BleuModeArg {
    Sentence,
    Corpus,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Generated trajectories
    #[arg(long)]
    pub generated: PathBuf,
    /// True trajectories, paired by user and window start
    #[arg(long)]
    pub truth: PathBuf,
    /// Pool all pairs or average per user [default: pooled]
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
    /// Average sentence scores or compute one corpus score [default: sentence]
    #[arg(long, value_enum)]
    pub bleu_mode: Option<BleuModeArg>,
    /// Replace zero n-gram matches by this epsilon [default: no smoothing]
    #[arg(long)]
    pub smoothing_epsilon: Option<f64>,
    /// Highest BLEU n-gram order [default: 4]
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Logarithm base for the divergence [default: 2]
    #[arg(long)]
    pub log_base: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RewardArgs {
    /// Generated samples; several per (user, window) form one group
    #[arg(long)]
    pub generated: PathBuf,
    /// True trajectories, one per (user, window)
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RefineArgs {
    /// Trajectory windows; the last day is the target
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Generated next-day trajectories, one {sample_id, points} per line;
    /// repeating the last history day otherwise
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    /// Maximum edits [default: 10]
    #[arg(long)]
    pub budget: Option<usize>,
    /// Candidates kept per step [default: 1]
    #[arg(long)]
    pub beam_width: Option<usize>,
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
