//! `nfft-krr`: feature ranking, training, prediction, grid search and MVM benchmarks.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nfft_krr::nfft::AccuracyProfile;
use nfft_krr::{Error, ErrorClass};

const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "nfft-krr", version, about = "Kernel ridge regression with NFFT-based fast summation")]
struct Cli {
    /// Worker threads for window applies and grid cells (1 = fully serial).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank features by mutual information with the label; JSON to stdout.
    #[command(allow_negative_numbers = true)]
    MisRank(MisRankArgs),
    /// Fit a model and write it to a model file.
    #[command(allow_negative_numbers = true)]
    Fit(FitArgs),
    /// Evaluate a saved model on a CSV file.
    #[command(allow_negative_numbers = true)]
    Predict(PredictArgs),
    /// Select sigma and lambda on an inner holdout, refit, and score on the test split.
    #[command(allow_negative_numbers = true)]
    Gridsearch(GridArgs),
    /// Time fast against direct kernel-vector products on synthetic data.
    #[command(allow_negative_numbers = true)]
    BenchMvm(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    pub csv: PathBuf,
    #[arg(long, default_value = "class")]
    pub label_column: String,
    /// Label value mapped to +1; the other value maps to -1.
    #[arg(long)]
    pub positive_label: String,
    /// Undersample the majority class first.
    #[arg(long)]
    pub balance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub maxiter: usize,
    #[arg(long, default_value_t = AccuracyProfile::Default)]
    pub profile: AccuracyProfile,
    /// Drop features whose MIS falls below this value.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Hold out this fraction of the rows as a test set.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Split in file order instead of after a seeded shuffle.
    #[arg(long)]
    pub no_shuffle_split: bool,
}

#[derive(Debug, Args)]
pub struct MisRankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "gamma")]
    pub sigma: Option<f64>,
    /// Alternative to --sigma with gamma = 1 / sigma^2.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Defaults to `<model-out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// When given together with --positive-label, accuracy is reported.
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, requires = "label_column")]
    pub positive_label: Option<String>,
    /// Defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', conflicts_with = "gamma_grid", default_value = "1e-3,1e-2,1e-1,1,1e1,1e2,1e3")]
    pub sigma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "1,1e1,1e2,1e3")]
    pub lambda_grid: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Fraction held out for the final test score.
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,
    #[arg(long)]
    pub no_shuffle_split: bool,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-cell table; defaults to `<model-out>.cells.csv`.
    #[arg(long)]
    pub cells_out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 100.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = AccuracyProfile::Default)]
    pub profile: AccuracyProfile,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest N for which the direct product runs.
    #[arg(long, default_value_t = nfft_krr::oracle::DENSE_SIZE_GUARD)]
    pub direct_limit: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Io => EXIT_IO,
        ErrorClass::Validation => EXIT_VALIDATION,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

fn run(cli: Cli) -> nfft_krr::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::MisRank(a) => commands::mis_rank(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Gridsearch(a) => commands::gridsearch(&a),
        Command::BenchMvm(a) => commands::bench_mvm(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
