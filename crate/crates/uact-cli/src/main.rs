//! `uact` — batch orchestration of the action-chunk pipeline: ingest raw
//! corpora, clean them, standardize into binary chunk shards, build sampling
//! plans, analyze balance metrics, and train/sample the flow-matching action
//! model. Every command writes a versioned JSON report and is deterministic
//! given its seeds.

mod commands;
mod config;
mod gen;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::process;

/// Exit-code contract shared by every subcommand:
/// 0 success, 1 validation/config error, 2 I/O error, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
            CliError::Numerical(m) => write!(f, "numerical: {m}"),
        }
    }
}

impl From<uact_core::aml::AmlError> for CliError {
    fn from(e: uact_core::aml::AmlError) -> Self {
        use uact_core::aml::AmlError;
        match e {
            AmlError::Diverged { .. } => CliError::Numerical(e.to_string()),
            AmlError::Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<uact_core::shard::ShardError> for CliError {
    fn from(e: uact_core::shard::ShardError) -> Self {
        use uact_core::shard::ShardError;
        match e {
            ShardError::Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<uact_core::sampler::SamplerError> for CliError {
    fn from(e: uact_core::sampler::SamplerError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<uact_core::standardize::StandardizeError> for CliError {
    fn from(e: uact_core::standardize::StandardizeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<uact_core::model::ModelError> for CliError {
    fn from(e: uact_core::model::ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<uact_core::schema::SchemaError> for CliError {
    fn from(e: uact_core::schema::SchemaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

const PRECEDENCE_NOTE: &str = "Configuration precedence: command-line flags override config-file \
fields, which override built-in defaults. Exit codes: 0 success, 1 validation/config error, \
2 I/O error, 3 numerical failure. The env var UACT_THREADS caps the worker-thread count.";

#[derive(Parser)]
#[command(
    name = "uact",
    version,
    about = "Action-chunk data pipeline and flow-matching model toolkit",
    long_about = None,
    after_help = PRECEDENCE_NOTE,
    after_long_help = PRECEDENCE_NOTE
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw corpus documents against their schemas into an episode store
    Ingest(IngestArgs),
    /// Filter and refine an episode store; write survivors and a report
    Clean(CleanArgs),
    /// Convert episodes to unified delta-action chunks in a binary shard
    Standardize(StandardizeArgs),
    /// Build a sampling plan (probability table + draws) over a corpus manifest
    Sample(SampleArgs),
    /// Compute balance metrics (Gini, Lorenz, rank, coverage) for a plan
    Analyze(AnalyzeArgs),
    /// Train the flow-matching action model on a chunk shard
    AmlTrain(AmlTrainArgs),
    /// Draw action chunks from a trained model checkpoint
    AmlSample(AmlSampleArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Generate a deterministic synthetic corpus with optional injected defects
    Gen(GenArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Raw corpus file (line-delimited JSON, one episode per line)
    #[arg(long)]
    pub raw: Option<String>,
    /// Schema registry (line-delimited JSON, one descriptor per line)
    #[arg(long)]
    pub schemas: Option<String>,
    /// Output directory for episodes.jsonl, manifest.json, ingest_report.json
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Pipeline config file (JSON)
    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Args)]
pub struct CleanArgs {
    /// Episode store to clean (episodes.jsonl from `uact ingest`)
    #[arg(long)]
    pub episodes: Option<String>,
    /// Schema registry (line-delimited JSON)
    #[arg(long)]
    pub schemas: Option<String>,
    /// Output directory for episodes.jsonl, manifest.json, clean_report.json
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Pipeline config file (JSON)
    #[arg(long)]
    pub config: Option<String>,
    /// Keep episodes with at least this many frames
    #[arg(long)]
    pub min_frames: Option<usize>,
    /// Keep episodes with at most this many frames
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// Largest plausible per-step translation (meters)
    #[arg(long)]
    pub max_translation_step: Option<f64>,
    /// Largest plausible per-step rotation (radians)
    #[arg(long)]
    pub max_rotation_step: Option<f64>,
    /// Frames darker than this mean luminance count as black
    #[arg(long)]
    pub black_brightness_max: Option<f64>,
    /// Frames with a focus measure below this count as blurred
    #[arg(long)]
    pub blur_sharpness_min: Option<f64>,
    /// Reject when more than this fraction of measured frames is blurred
    #[arg(long)]
    pub blur_frame_fraction: Option<f64>,
    /// Allowed relative gap between action_rate and fps
    #[arg(long)]
    pub rate_mismatch_tol: Option<f64>,
    /// Minimum fraction of printable characters in the instruction
    #[arg(long)]
    pub min_ascii_ratio: Option<f64>,
    /// Longest allowed run of one repeated character in the instruction
    #[arg(long)]
    pub max_repeat_run: Option<usize>,
}

#[derive(Args)]
pub struct StandardizeArgs {
    /// Episode store to standardize (episodes.jsonl)
    #[arg(long)]
    pub episodes: Option<String>,
    /// Schema registry (line-delimited JSON)
    #[arg(long)]
    pub schemas: Option<String>,
    /// Output directory for chunks.uact, its manifest, norm_stats.json
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Chunk horizon (rows per chunk)
    #[arg(long)]
    pub h: Option<usize>,
    /// Window stride in frames (default: the horizon, i.e. non-overlapping)
    #[arg(long)]
    pub stride: Option<usize>,
    /// Normalization clip bound in standard deviations
    #[arg(long)]
    pub clip: Option<f64>,
    /// Pipeline config file (JSON)
    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Args)]
pub struct SampleArgs {
    /// Corpus manifest (manifest.json from ingest/clean)
    #[arg(long)]
    pub manifest: Option<String>,
    /// Sampling strategy: trajectory-uniform | task-uniform |
    /// embodiment-uniform | dual-weighted
    #[arg(long)]
    pub strategy: Option<uact_core::sampler::Strategy>,
    /// Number of draws to materialize in the plan
    #[arg(long)]
    pub draws: Option<usize>,
    /// RNG seed (required; randomized commands take no default seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability mass allocated to the single-arm pool
    #[arg(long)]
    pub single_arm_budget: Option<f64>,
    /// Output plan path
    #[arg(long, default_value = "plan.json")]
    pub out: String,
    /// Pipeline config file (JSON)
    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Sampling plan to analyze (plan.json)
    #[arg(long)]
    pub plan: String,
    /// Corpus manifest supplying the skill of each episode
    #[arg(long)]
    pub manifest: String,
    /// Output metrics path
    #[arg(long, default_value = "metrics.json")]
    pub out: String,
}

#[derive(Args)]
pub struct AmlTrainArgs {
    /// Chunk shard to train on (chunks.uact)
    #[arg(long)]
    pub shard: Option<String>,
    /// Output checkpoint path; the trace sidecar lands next to it
    #[arg(long)]
    pub out: Option<String>,
    /// RNG seed (required; randomized commands take no default seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gradient-descent steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Batch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Largest flow time used in training draws and stored as the
    /// inference clamp
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Hidden layer widths, comma-separated (e.g. 64,64)
    #[arg(long)]
    pub hidden: Option<String>,
    /// Context embedding width
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Output-layer meaning: a-pred (clean-action estimate) or v-pred
    /// (velocity estimate)
    #[arg(long)]
    pub paradigm: Option<String>,
    /// Hidden activation: tanh | relu
    #[arg(long)]
    pub activation: Option<String>,
    /// Apply these normalization statistics to chunks before training
    #[arg(long)]
    pub norm_stats: Option<String>,
    /// Pipeline config file (JSON)
    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Args)]
pub struct AmlSampleArgs {
    /// Model checkpoint (*.amlm)
    #[arg(long)]
    pub model: String,
    /// Euler integration steps
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
    /// Number of chunks to draw
    #[arg(long, default_value_t = 16)]
    pub draws: usize,
    /// RNG seed (required; randomized commands take no default seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Context id to condition on
    #[arg(long, default_value_t = 0)]
    pub context: usize,
    /// Conditioning state vector, comma-separated floats (default: zeros)
    #[arg(long)]
    pub state: Option<String>,
    /// Output samples path
    #[arg(long, default_value = "samples.json")]
    pub out: String,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// RNG seed for the probe model and batch (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative-error tolerance per parameter
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Output-layer meaning to check: a-pred | v-pred
    #[arg(long, default_value = "a-pred")]
    pub paradigm: String,
    /// Output report path
    #[arg(long, default_value = "gradcheck_report.json")]
    pub out: String,
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of episodes to generate
    #[arg(long)]
    pub episodes: usize,
    /// Fraction of episodes to inject with one defect each
    #[arg(long, default_value_t = 0.0)]
    pub defect_rate: f64,
    /// RNG seed (required; randomized commands take no default seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for corpus.jsonl, schemas.jsonl, defects.json
    #[arg(long)]
    pub out_dir: String,
}

fn configure_threads() -> Result<(), CliError> {
    match std::env::var("UACT_THREADS") {
        Ok(raw) => {
            let n: usize = raw.trim().parse().map_err(|_| {
                CliError::Validation(format!("UACT_THREADS must be a positive integer, got '{raw}'"))
            })?;
            if n == 0 {
                return Err(CliError::Validation(
                    "UACT_THREADS must be a positive integer, got '0'".to_string(),
                ));
            }
            // A failure here means a pool already exists (e.g. in tests);
            // the cap is best-effort in that case.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(CliError::Validation(format!("UACT_THREADS: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Ingest(args) => commands::cmd_ingest(args),
        Command::Clean(args) => commands::cmd_clean(args),
        Command::Standardize(args) => commands::cmd_standardize(args),
        Command::Sample(args) => commands::cmd_sample(args),
        Command::Analyze(args) => commands::cmd_analyze(args),
        Command::AmlTrain(args) => commands::cmd_aml_train(args),
        Command::AmlSample(args) => commands::cmd_aml_sample(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
        Command::Gen(args) => gen::cmd_gen(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}
