use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Autoregressive asymmetric linear Gaussian HMMs for multivariate time series.
#[derive(Parser)]
#[command(name = "arhmm", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row, one column per variable
    #[arg(long)]
    data: PathBuf,

    /// Cell values treated as missing (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = arhmm::dataset::DEFAULT_MISSING_TOKENS.map(String::from))]
    missing: Vec<String>,

    /// Missing cells become the mean of up to this many previous values
    #[arg(long, default_value_t = arhmm::dataset::DEFAULT_IMPUTE_WINDOW)]
    impute_window: usize,
}

#[derive(Args)]
struct LabelArgs {
    /// Per-variable weights v (comma separated, default all ones)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v: Option<Vec<f64>>,

    /// Per-variable reference levels kappa (comma separated, default all zeros)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    kappa: Option<Vec<f64>>,

    /// Use the air-quality limits for SO2, NO2, CO, O3, PM10, PM2.5 (v = 1/kappa)
    #[arg(long, conflicts_with_all = ["v", "kappa"])]
    air_quality: bool,

    /// Label function: 1 = weighted sum, 2 = weighted maximum
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    g: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model by structural EM
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Number of hidden states
        #[arg(long)]
        states: usize,
        /// ar-aslg, aslg or naive
        #[arg(long, default_value = "ar-aslg")]
        mode: String,
        /// Maximum AR lag p*: "auto" or a number
        #[arg(long, default_value = "auto")]
        max_lag: String,
        /// Largest lag tested when --max-lag is auto
        #[arg(long, default_value_t = arhmm::lags::DEFAULT_KMAX)]
        kmax: usize,
        /// Significance level of the partial autocorrelation test
        #[arg(long, default_value_t = arhmm::lags::DEFAULT_ALPHA)]
        alpha: f64,
        /// Relative convergence tolerance for EM and for the structure search
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// EM iterations per structure
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Structure search rounds
        #[arg(long, default_value_t = 20)]
        max_rounds: usize,
        /// Extra runs from random segmentations; the best penalized fit wins
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Seed of the first restart
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model file to write (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Write the log-likelihood trace of the final EM run as CSV iter,loglik
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Most probable state path, one row per decoded time step
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// CSV output t,state (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add a column with the label of each decoded state
        #[arg(long)]
        with_labels: bool,
        #[command(flatten)]
        label: LabelArgs,
    },
    /// Log-likelihood, reported BIC and parameter count of a model on data
    Score {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Implied stationary means and labels of each hidden state
    Label {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        label: LabelArgs,
    },
    /// Autocorrelations, partial autocorrelations and selected AR orders
    Lags {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = arhmm::lags::DEFAULT_KMAX)]
        kmax: usize,
        #[arg(long, default_value_t = arhmm::lags::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Simulate a built-in scenario; also writes <out>.states.csv with the true path
    Generate {
        /// 1 (three variables) or 2 (six variables)
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scenario: u8,
        /// Blocks as STATE:LENGTH,... with 1-based states (default: training layout)
        #[arg(long, conflicts_with = "test")]
        blocks: Option<String>,
        /// Use held-out test layout 1-4 instead of the training layout
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        test: Option<u8>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows simulated and discarded before the first block
        #[arg(long, default_value_t = arhmm::synth::DEFAULT_BURN_IN)]
        burn_in: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One Graphviz file per hidden state
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
