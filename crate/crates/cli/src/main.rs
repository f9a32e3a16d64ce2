//! Experiment driver for the parity-learning laboratory.
//!
//! Every subcommand runs one experiment and persists one
//! [`ExperimentRecord`] line: to `--out` when given, to stdout
//! otherwise, with a short human summary on stderr either way.
//! Re-running a subcommand with the same seed and tool version
//! reproduces the record byte-for-byte except for its timestamp.
//!
//! Exit codes: 0 on success (a refuted certificate is still a success),
//! 2 on usage, parse, or I/O problems, 3 when an invoked module detects
//! an invariant violation, 4 when a request exceeds an enumeration
//! budget. The only environment variable read is `PARITYLAB_WORKERS`,
//! which caps the worker threads trials fan out over.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paritylab_core::error::{Error, Result};

use crate::commands::RunOutput;

/// Tool identifier stamped into every record.
const TOOL: &str = concat!("paritylab ", env!("CARGO_PKG_VERSION"));

#[derive(Parser)]
#[command(name = "paritylab", version, about = "Multi-pass parity-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify or refute extractor parameters for a learning matrix.
    CertifyExtractor(CertifyArgs),
    /// Run an exact engine over a program and report layer masses.
    Simulate(SimulateArgs),
    /// Probability that a program outputs the hidden concept.
    SuccessProb(SuccessProbArgs),
    /// Check the potential and flatness lemmas on two-pass instances.
    VerifyLemmas(VerifyLemmasArgs),
    /// Run the block-elimination learner over seeded trials.
    LearnMultipass(LearnMultipassArgs),
    /// One-pass Gaussian elimination and brute-force baselines.
    Baselines(BaselinesArgs),
}

#[derive(Args)]
struct CertifyArgs {
    /// Matrix file, or a builtin descriptor such as `parity(4)`.
    #[arg(long)]
    matrix: String,
    /// Extractor exponent: at most a 2^-k fraction of rows may be bad.
    #[arg(long)]
    k: f64,
    /// Ratio exponent: test functions satisfy l2(f) <= 2^l l1(f).
    #[arg(long)]
    l: f64,
    /// Correlation exponent: a row is bad at |<M_a, f>| >= 2^-r l1(f).
    #[arg(long)]
    r: f64,
    #[arg(long, value_enum, default_value_t = CertMode::Exhaustive)]
    mode: CertMode,
    /// Candidate functions tried by the montecarlo mode.
    #[arg(long, default_value_t = 256)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CertMode {
    Exhaustive,
    Parseval,
    Montecarlo,
}

#[derive(Args)]
struct SimulateArgs {
    /// Program file in the `BP v1` format.
    #[arg(long)]
    program: PathBuf,
    /// Matrix file, or a builtin descriptor such as `parity(2)`.
    #[arg(long)]
    matrix: String,
    /// Threshold schedule: a preset descriptor or a JSON file. Without
    /// it the run is untruncated.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long, value_enum, default_value_t = EngineChoice::Auto)]
    engine: EngineChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineChoice {
    /// The product-form engine when applicable, enumeration otherwise.
    Auto,
    Dp,
    Enumerate,
    /// Run both engines and require exact agreement.
    Both,
}

#[derive(Args)]
struct SuccessProbArgs {
    /// Program file in the `BP v1` format.
    #[arg(long)]
    program: PathBuf,
    /// Matrix file, or a builtin descriptor such as `parity(3)`.
    #[arg(long)]
    matrix: String,
    /// Threshold schedule for the exact mode; untruncated when omitted.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long, value_enum, default_value_t = ProbMode::Exact)]
    mode: ProbMode,
    /// Trials for the montecarlo mode.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbMode {
    Exact,
    Montecarlo,
}

#[derive(Args)]
struct VerifyLemmasArgs {
    /// Program file to verify; random two-pass instances when omitted.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Matrix file or builtin descriptor; defaults to the parity matrix
    /// matching the instance.
    #[arg(long)]
    matrix: Option<String>,
    /// Threshold schedule: a preset descriptor or a JSON file; defaults
    /// to a small two-pass custom schedule.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of generated instances (ignored with --program).
    #[arg(long, default_value_t = 50)]
    instances: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnMultipassArgs {
    /// Parity bit length.
    #[arg(long)]
    n: usize,
    /// Total pass budget the configuration is derived from.
    #[arg(long)]
    q: u64,
    #[arg(long, default_value_t = 2000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselinesArgs {
    /// Parity bit length.
    #[arg(long)]
    n: usize,
    /// Samples per stream (one pass for both baselines).
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Applies `PARITYLAB_WORKERS` to the global thread pool.
fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var("PARITYLAB_WORKERS") else {
        return Ok(());
    };
    let workers: usize = raw
        .parse()
        .ok()
        .filter(|&w| w >= 1)
        .ok_or_else(|| Error::InvalidArg(format!("PARITYLAB_WORKERS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::InvalidArg(format!("worker pool: {e}")))
}

fn run(command: Command) -> Result<ExitCode> {
    let (out, RunOutput { record, failure }) = match command {
        Command::CertifyExtractor(a) => (a.out.clone(), commands::certify_extractor(&a)?),
        Command::Simulate(a) => (a.out.clone(), commands::simulate(&a)?),
        Command::SuccessProb(a) => (a.out.clone(), commands::success_prob(&a)?),
        Command::VerifyLemmas(a) => (a.out.clone(), commands::verify_lemmas(&a)?),
        Command::LearnMultipass(a) => (a.out.clone(), commands::learn_multipass(&a)?),
        Command::Baselines(a) => (a.out.clone(), commands::baselines(&a)?),
    };

    let line = record.to_line();
    match &out {
        Some(path) => std::fs::write(path, format!("{line}\n"))?,
        None => println!("{line}"),
    }
    eprintln!("{}", commands::summary(&record));

    match failure {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(exit_code(&e)))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

/// The documented exit code for an error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget { .. } => 4,
        Error::Invariant(_) => 3,
        Error::Parse { .. } | Error::InvalidArg(_) | Error::Io(_) => 2,
    }
}
