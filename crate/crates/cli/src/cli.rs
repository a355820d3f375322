use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msfs_core::graph::{SigmaRule, WalkMode, DEFAULT_WALK_STEPS};
use msfs_core::mlknn::{DEFAULT_K, DEFAULT_SMOOTH};
use msfs_core::solver::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use msfs_core::SplitMode;

use crate::input::{DataSource, Format, LabelSource};

#[derive(Debug, Parser)]
#[command(
    name = "msfs",
    version,
    about = "Random-walk manifold multi-label feature selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dimension, label count, size, PMC, ANL and density as JSON.
    Stats(StatsArgs),
    /// Sample the neighborhood graph and dump S as a coordinate list.
    Graph(GraphArgs),
    /// Fit the solver and emit the selected features.
    Select(SelectArgs),
    /// Train ML-KNN on selected features and report the evaluation metrics.
    Eval(EvalArgs),
    /// Run a parameter grid described by a JSON config file.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset file (training file when --test-data is given).
    #[arg(long)]
    pub data: PathBuf,
    /// Separate test file in the same format.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Number of trailing label columns (CSV) or label spec XML (ARFF).
    #[arg(long)]
    pub labels: LabelSource,
    /// CSV has a header row.
    #[arg(long)]
    pub header: bool,
}

impl DataArgs {
    pub fn source(&self) -> DataSource {
        DataSource {
            path: self.data.clone(),
            test_path: self.test_data.clone(),
            format: self.format,
            labels: self.labels.clone(),
            header: self.header,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum SplitModeArg {
    #[default]
    FirstN,
    Shuffled,
}

impl From<SplitModeArg> for SplitMode {
    fn from(m: SplitModeArg) -> Self {
        match m {
            SplitModeArg::FirstN => SplitMode::FirstN,
            SplitModeArg::Shuffled => SplitMode::Shuffled,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// Training rows.
    #[arg(long, requires = "test")]
    pub train: Option<usize>,
    /// Test rows.
    #[arg(long, requires = "train")]
    pub test: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub split_mode: SplitModeArg,
    /// Gaussian noise ratio applied to every feature column before splitting.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Z-score features with training-split statistics.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum WalkModeArg {
    #[default]
    Dfs,
    Bfs,
}

impl From<WalkModeArg> for WalkMode {
    fn from(m: WalkModeArg) -> Self {
        match m {
            WalkModeArg::Dfs => WalkMode::Dfs,
            WalkModeArg::Bfs => WalkMode::Bfs,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WalkArgs {
    /// Walk length per origin.
    #[arg(long, default_value_t = DEFAULT_WALK_STEPS)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t)]
    pub mode: WalkModeArg,
    /// Fixed Gaussian bandwidth; default is the median nonzero distance.
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl WalkArgs {
    pub fn sigma_rule(&self) -> SigmaRule {
        self.sigma.map_or(SigmaRule::Median, SigmaRule::Fixed)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed; stage seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write results into this directory instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub rho: f64,
    /// Number of features to select.
    #[arg(short = 'l', long = "count")]
    pub count: usize,
    /// Use a previously dumped graph instead of sampling one.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Selection JSON as written by `select`.
    #[arg(long)]
    pub selection: PathBuf,
    /// ML-KNN neighbors.
    #[arg(short = 'k', long = "neighbors", default_value_t = DEFAULT_K)]
    pub neighbors: usize,
    #[arg(long, default_value_t = DEFAULT_SMOOTH)]
    pub smooth: f64,
    /// Also write the test-set label scores as CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
