//! Command-line surface: argument parsing, dispatch, and exit codes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

mod bundle;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use bundle::{Bundle, ClassifierRun, RunConfig, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use commands::{metrics_path, Schemes, SCHEME_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Check,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: msg.into() }
    }

    pub fn check(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Check, message: msg.into() }
    }

    pub fn code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Check => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    crate::synth_bench::SynthError,
    crate::training::TrainError,
    crate::baselines::BaselineError,
    crate::metrics_eval::MetricsError,
    crate::model::ModelError,
    crate::ingest::IngestError,
    crate::autodiff::AutodiffError,
    std::io::Error
);

#[derive(Debug, Parser)]
#[command(name = "roadtagger", version, about = "Lane count and road type inference on road network graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark suite (worlds plus manifest) to a directory.
    Generate(GenerateArgs),
    /// Train the tagger and the comparison schemes on a suite directory.
    Train(TrainArgs),
    /// Score schemes on the test worlds of a suite directory.
    Eval(EvalArgs),
    /// Predict attributes for one network and write them as GeoJSON.
    Infer(InferArgs),
    /// Finite-difference check of every differentiable op and of the model.
    Gradcheck(GradcheckArgs),
    /// Comparison-scheme utilities.
    #[command(subcommand)]
    Baseline(BaselineCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// basic, occlusion_sweep, overpass, or long_disruption.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub seed: u64,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Propagation steps the span lengths are scaled to.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub train_worlds: Option<usize>,
    #[arg(long)]
    pub validation_worlds: Option<usize>,
    #[arg(long)]
    pub test_worlds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML or JSON run config; omitted keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Suite directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint bundle to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on one split only; all splits are pooled by default.
    #[arg(long)]
    pub split: Option<String>,
    /// Overrides the config's tagger iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-iteration metrics CSV; defaults to `<out stem>.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Skip the classifier and MRF fit.
    #[arg(long)]
    pub no_baselines: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated; the first scheme is the reference row.
    #[arg(long, default_value = "roadtagger,classifier,smooth,mrf")]
    pub schemes: String,
    /// Report CSV to write.
    #[arg(long)]
    pub report: PathBuf,
    /// Evaluate one split only; every split gets its own rows by default.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// GeoJSON network, or OSM XML when the extension is .osm or .xml.
    #[arg(long)]
    pub network: PathBuf,
    /// Per-vertex feature CSV in vertex order.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// roadtagger, classifier, smooth, or mrf.
    #[arg(long, default_value = "roadtagger")]
    pub scheme: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per op and model instances.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Grid-search the MRF pairwise weight and exponent on validation worlds.
    MrfSearch(MrfSearchArgs),
}

#[derive(Debug, Args)]
pub struct MrfSearchArgs {
    /// TOML or JSON with `lambdas` and `exponents`.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub split: Option<String>,
    /// Score table CSV; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Store the selected settings back into the checkpoint.
    #[arg(long)]
    pub update: bool,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Baseline(BaselineCommand::MrfSearch(a)) => commands::mrf_search(a),
    }
}
