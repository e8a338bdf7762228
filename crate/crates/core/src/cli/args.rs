use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregation::{
    Strategy, DEFAULT_PRUNE_FRACTION, DEFAULT_RANSAC_ITERATIONS, DEFAULT_RANSAC_THRESHOLD,
};
use crate::hough::{DepthMode, DEFAULT_MIN_PIXELS, DEFAULT_THETA_IN};
use crate::metrics::DEFAULT_TAU_MAX;
use crate::quat::WeightSource;
use crate::scene_io::synth::{DEFAULT_HEIGHT, DEFAULT_MODEL_POINTS, DEFAULT_WIDTH};

pub const DEFAULT_BENCH_REPS: usize = 400;
pub const DEFAULT_BENCH_QUATS: usize = 30_000;
pub const DEFAULT_OBJECTS: usize = 3;

#[derive(Debug, Parser)]
#[command(
    name = "posefuse",
    version,
    about = "Fuse and evaluate dense 6D pose predictions"
)]
pub struct Cli {
    /// Print every default as JSON and exit.
    #[arg(long, global = true)]
    pub print_defaults: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic dense maps from ground truth and point models.
    Synth(SynthArgs),
    /// Recover one pose per object from dense maps.
    Aggregate(AggregateArgs),
    /// Score estimated poses against ground truth.
    Evaluate(EvaluateArgs),
    /// Time the aggregation strategies.
    Bench(BenchArgs),
    /// Write the procedural box / can / mug models.
    GenModels(GenModelsArgs),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_cli_name(s).ok_or_else(|| {
        let names: Vec<_> = Strategy::ALL.iter().map(|s| s.cli_name()).collect();
        format!(
            "unknown strategy {s:?}, expected one of {}",
            names.join(", ")
        )
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Unit,
    Norm,
    Segm,
}

impl From<WeightArg> for WeightSource {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Unit => WeightSource::Unit,
            WeightArg::Norm => WeightSource::Norm,
            WeightArg::Segm => WeightSource::SegmentationScore,
        }
    }
}

/// Which pixels feed the orientation aggregation of a detected object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    /// All pixels labeled with the class.
    Segm,
    /// Only the Hough inliers.
    Inliers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DepthArg {
    Mean,
    Median,
}

impl From<DepthArg> for DepthMode {
    fn from(d: DepthArg) -> Self {
        match d {
            DepthArg::Mean => DepthMode::Mean,
            DepthArg::Median => DepthMode::Median,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AggregationArgs {
    #[arg(long, value_parser = parse_strategy, default_value = "average")]
    pub strategy: Strategy,
    #[arg(long, value_enum, default_value = "norm")]
    pub weights: WeightArg,
    /// Fraction of least-confident samples dropped by `pruned`.
    #[arg(long, default_value_t = DEFAULT_PRUNE_FRACTION)]
    pub lambda: f64,
    /// RANSAC inlier threshold, radians.
    #[arg(long, default_value_t = DEFAULT_RANSAC_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_RANSAC_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Scene directories holding the dense maps.
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    /// Output poses JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Intrinsics JSON overriding each scene's `intrinsics.json`.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[command(flatten)]
    pub aggregation: AggregationArgs,
    #[arg(long, default_value_t = DEFAULT_THETA_IN)]
    pub theta_in: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_PIXELS)]
    pub min_pixels: usize,
    #[arg(long, value_enum, default_value = "mean")]
    pub depth_mode: DepthArg,
    #[arg(long, value_enum, default_value = "segm")]
    pub mask: MaskArg,
    /// Stored depth is ln(z).
    #[arg(long)]
    pub log_depth: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub poses: PathBuf,
    /// Ground-truth JSON files or scene directories containing `gt.json`.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    pub tau_max: f64,
    /// Report JSON.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-sample CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub models: PathBuf,
    /// Output scene directory (parent directory when `--count` > 1).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Ground-truth JSON to render; a random scene is drawn when absent.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_OBJECTS)]
    pub objects: usize,
    /// Number of random scenes, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    pub width: usize,
    #[arg(long, default_value_t = DEFAULT_HEIGHT)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sigma_quat: Option<f64>,
    #[arg(long)]
    pub sigma_dir: Option<f64>,
    #[arg(long)]
    pub sigma_depth: Option<f64>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// Start from an all-zero noise specification.
    #[arg(long)]
    pub zero_noise: bool,
    /// Store ln(z) in the depth map.
    #[arg(long)]
    pub log_depth: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Scene directory whose largest foreground class supplies the quaternions;
    /// a synthetic noisy set is used when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Comma-separated strategies (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    #[arg(long, default_value_t = DEFAULT_BENCH_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_BENCH_QUATS)]
    pub n_quats: usize,
    #[command(flatten)]
    pub aggregation: AggregationArgs,
    /// CSV output; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenModelsArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MODEL_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
