//! Command-line front end: argument parsing, input loading and report output.

mod commands;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;

/// Exit status for malformed input, bad flags and unreadable files.
pub const EXIT_INPUT: i32 = 2;
/// Exit status when no category could be analyzed.
pub const EXIT_NOTHING: i32 = 3;

/// A failed run: the message to print and the process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn nothing(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NOTHING,
            error: anyhow::anyhow!(message.into()),
        }
    }

    pub fn internal(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ctxbound",
    version,
    about = "Upper bounds on AP gains from detection context"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match detections to ground truth and count outcomes per category.
    Match(MatchArgs),
    /// Best-relation AP bounds per category and IoU threshold.
    Bounds(BoundsArgs),
    /// Maximal classification capacity per category and error type.
    Capacity(CapacityArgs),
    /// Heuristic bin ranking against the exhaustive permutation optimum.
    Oracle(OracleArgs),
    /// Generate a synthetic dataset from a config file.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Ground-truth annotation file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection results file.
    #[arg(long)]
    pub det: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub iou: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct Frame {
    /// Grid extent G of the spatial frame; cells span [-G, G] on each axis.
    #[arg(long, default_value_t = 3)]
    pub grid: u32,
    /// Cell side as a multiple of the detection height.
    #[arg(long, default_value_t = 1.0)]
    pub height_factor: f64,
}

#[derive(Debug, Clone, Args)]
pub struct Search {
    /// Confidence bins.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Atoms combined into and/or pairs.
    #[arg(long, default_value_t = 50)]
    pub top_k: usize,
    /// Random-context baseline trials.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Offset for the random-context seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub output: Output,
    /// Also write every evaluated detection as JSON.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub search: Search,
    #[command(flatten)]
    pub frame: Frame,
    #[command(flatten)]
    pub output: Output,
    /// Plot-data path; defaults to `<out>.plot.csv` when --out is given.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pool {
    /// Atoms plus composites of the best atoms.
    Full,
    /// Atomic relations only.
    Atoms,
    /// Only the constant relation.
    Constant,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub search: Search,
    #[command(flatten)]
    pub frame: Frame,
    #[command(flatten)]
    pub output: Output,
    /// Relations considered.
    #[arg(long, value_enum, default_value_t = Pool::Full)]
    pub pool: Pool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Ground-truth annotation file.
    #[arg(long, requires = "det", required_unless_present = "fixture")]
    pub gt: Option<PathBuf>,
    /// Detection results file.
    #[arg(long, requires = "gt")]
    pub det: Option<PathBuf>,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub iou: Vec<f64>,
    /// CSV of per-bin `t,f` counts to rank instead of a dataset.
    #[arg(long, conflicts_with_all = ["gt", "det"])]
    pub fixture: Option<PathBuf>,
    /// Positives for a fixture; defaults to the total true count.
    #[arg(long, requires = "fixture")]
    pub pos: Option<u64>,
    /// Confidence bins; binary context doubles them, so at most 5.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    #[arg(long, default_value_t = 50)]
    pub top_k: usize,
    #[command(flatten)]
    pub frame: Frame,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config in `key = value` form.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for `ground_truth.json` and `detections.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}
