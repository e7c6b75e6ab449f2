//! `upcos`: file-based pipelines for uncertainty-aware speaker verification scoring.

mod commands;
mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

/// Environment variable overriding the number of worker threads.
const THREADS_ENV: &str = "UPCOS_THREADS";

#[derive(Parser)]
#[command(
    name = "upcos",
    version,
    about = "Uncertainty-propagated scoring back-end for speaker verification"
)]
#[command(
    after_help = "Set UPCOS_THREADS to fix the number of worker threads; outputs do not depend on it."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: embeddings.txt, labels.txt and trials.txt
    Gen(GenArgs),
    /// Score a trial list
    Score(ScoreArgs),
    /// EER and minDCF of a score file against labelled trials
    Metrics(MetricsArgs),
    /// Covariance diagonals, boxplot summaries and an optional PLDA model
    Stats(StatsArgs),
    /// Average uncertainty against duration, with their Pearson correlation
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// 32-dimensional latent space, 16-dimensional embeddings
    Default,
    /// 128-dimensional latent space, 192-dimensional embeddings
    Full,
}

/// Generation settings. Every field may also be given in a TOML file via
/// `--config` using the same (kebab-case) names; flags win over the file.
#[derive(Args, Default, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct GenSettings {
    /// Base parameter set
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of speakers
    #[arg(long)]
    speakers: Option<usize>,
    /// Utterances per speaker
    #[arg(long)]
    utts: Option<usize>,
    /// Latent (frame feature) dimension
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Shortest utterance in seconds
    #[arg(long)]
    min_duration: Option<f64>,
    /// Longest utterance in seconds
    #[arg(long)]
    max_duration: Option<f64>,
    #[arg(long)]
    frames_per_second: Option<f64>,
    #[arg(long)]
    between_var: Option<f64>,
    #[arg(long)]
    within_var: Option<f64>,
    #[arg(long)]
    frame_noise_var: Option<f64>,
    /// Spread of the per-utterance log noise level (0 = uniform frame noise)
    #[arg(long)]
    heteroscedasticity: Option<f64>,
    /// Multiplier on the reported frame precision (1 = honest)
    #[arg(long)]
    precision_scale: Option<f64>,
    /// Target trials to sample (default: up to 1000)
    #[arg(long)]
    targets: Option<usize>,
    /// Nontarget trials to sample (default: up to 1000)
    #[arg(long)]
    nontargets: Option<usize>,
}

impl<'de> serde::Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Profile::from_str(&name, false).map_err(serde::de::Error::custom)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generation settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: GenSettings,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    /// Cosine similarity
    Cos,
    /// UP-Cos 1: Ue/d + I and Ut/d + I
    Up1,
    /// UP-Cos 2: (Ue + Stot)/d and (Ut + Stot)/d; needs --stats
    Up2,
    /// UP-Cos 3: shared (Ue + Ut)/d + I
    Up3,
    /// UP-Cos 4: shared (Ue + Ut + Stot)/d; needs --stats
    Up4,
    /// Two-covariance PLDA; needs --stats with a [plda] section
    Plda,
    /// PLDA with each side's uncertainty added to the within covariance
    UpPlda,
}

#[derive(Args)]
struct ScoreArgs {
    /// Enrolment embeddings
    #[arg(long)]
    enrol: PathBuf,
    /// Test embeddings (default: the enrolment file)
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    trials: PathBuf,
    #[arg(long, value_enum)]
    variant: Variant,
    /// Stats file providing the total covariance and PLDA model
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Score file to write
    #[arg(long)]
    out: PathBuf,
    /// Also write per-trial alpha_e and alpha_t (cosine variants only)
    #[arg(long)]
    alphas: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Trial list with target/nontarget labels
    #[arg(long)]
    trials: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    dcf_ptarget: f64,
    #[arg(long, default_value_t = 1.0)]
    dcf_cmiss: f64,
    #[arg(long, default_value_t = 1.0)]
    dcf_cfa: f64,
    /// Write the threshold sweep as CSV
    #[arg(long)]
    sweep: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Utterance-to-speaker labels
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Skip fitting the PLDA model
    #[arg(long)]
    no_plda: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// CSV to write
    #[arg(long)]
    out: PathBuf,
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got {raw:?}"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker threads: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Score(args) => commands::score(args),
        Command::Metrics(args) => commands::metrics(args),
        Command::Stats(args) => commands::stats(args),
        Command::Analyze(args) => commands::analyze(args),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let reason = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: {reason}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
