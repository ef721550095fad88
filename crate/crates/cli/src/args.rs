use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sparse_depth::SolverConfig;

#[derive(Debug, Parser)]
#[command(name = "sparse-depth", version, about = "Sparse depth reconstruction by l1 second-difference minimization")]
pub struct Cli {
    /// Where to write the run manifest (default: `<output>.manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic piecewise-linear profile or planar depth image.
    Gen(GenArgs),
    /// Draw a sample set from a profile or image.
    Sample(SampleArgs),
    /// Reconstruct a profile or image from samples.
    Reconstruct(ReconstructArgs),
    /// Recovery analysis tools.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Monte Carlo sweeps over sampling fraction, noise level or size.
    Bench(BenchArgs),
    /// Encode an image as an edge-sample container.
    Compress(CompressArgs),
    /// Reconstruct an image from a container.
    Decompress(DecompressArgs),
    /// Upsample a depth image by integer factors.
    Superres(SuperresArgs),
    /// Merge samples from several posed frames into the current one.
    Multiframe(MultiframeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Final smoothing parameter.
    #[arg(long = "mu-f", default_value_t = 1e-3)]
    pub mu_f: f64,
    /// Continuation stages.
    #[arg(long = "T", default_value_t = 5)]
    pub stages: usize,
    /// Inner iteration cap per stage.
    #[arg(long = "K", default_value_t = 10_000)]
    pub max_inner: usize,
    /// Stage stopping threshold on the l-infinity step.
    #[arg(long, default_value_t = 1e-5)]
    pub tau: f64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig<f64> {
        SolverConfig::default()
            .with_mu_f(self.mu_f)
            .with_stages(self.stages)
            .with_max_inner(self.max_inner)
            .with_tau(self.tau)
    }
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("dim").required(true).args(["one_d", "three_d"])))]
pub struct GenArgs {
    /// Piecewise-linear 1D profile.
    #[arg(long = "1d")]
    pub one_d: bool,
    /// Depth image made of planar folds.
    #[arg(long = "3d")]
    pub three_d: bool,
    #[arg(long, default_value_t = 2000, conflicts_with = "three_d")]
    pub n: usize,
    #[arg(long, default_value_t = 100, conflicts_with = "one_d")]
    pub rows: usize,
    #[arg(long, default_value_t = 100, conflicts_with = "one_d")]
    pub cols: usize,
    #[arg(long, default_value_t = 15, conflicts_with = "three_d")]
    pub corners: usize,
    #[arg(long, default_value_t = 3, conflicts_with = "one_d")]
    pub folds: usize,
    #[arg(long = "max-value", default_value_t = 10.0)]
    pub max_value: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (`.pgm` for 16-bit PGM, CSV otherwise).
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Uniform,
    Grid,
    Twin,
    Corners,
    Edges,
    ImageEdges,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Ground-truth profile or image.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Uniform)]
    pub strategy: StrategyArg,
    /// Percentage of locations for uniform sampling.
    #[arg(long = "perc-samples", default_value_t = 10.0)]
    pub perc_samples: f64,
    /// Line spacing for grid sampling (rows).
    #[arg(long = "spacing-r", default_value_t = 8)]
    pub spacing_r: usize,
    /// Line spacing for grid sampling (columns).
    #[arg(long = "spacing-c", default_value_t = 8)]
    pub spacing_c: usize,
    /// Detection threshold for corner, edge and gradient strategies.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "add-neighbors")]
    pub add_neighbors: bool,
    #[arg(long = "add-boundary")]
    pub add_boundary: bool,
    /// Uniform noise amplitude added to the sampled values.
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples JSON output.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    L1,
    L1diag,
    L1cart,
    Naive,
    /// Two-stage 1D algorithm for twin samples.
    A1,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    /// Reference profile or image; supplies sample values the samples file
    /// lacks and enables error metrics.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Samples JSON.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::L1)]
    pub objective: ObjectiveArg,
    /// JSON with column-major `vertical` and `horizontal` coordinate grids.
    #[arg(long, required_if_eq("objective", "l1cart"))]
    pub coords: Option<PathBuf>,
    /// Noise bound; overrides the one stored in the samples file.
    #[arg(long)]
    pub eps: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Exact recovery constant of a sample set for a ground truth.
    Cer(CerArgs),
    /// Sign consistency of a profile or image with respect to its samples.
    Sign(SignArgs),
    /// Bounds on every sign-consistent reconstruction.
    Envelope(EnvelopeArgs),
    /// Search for a dual optimality certificate.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorArg {
    L1,
    L1diag,
}

#[derive(Debug, Args, Serialize)]
pub struct CerArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value_t = OperatorArg::L1)]
    pub operator: OperatorArg,
    /// Support threshold on the operator response.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SignArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnvelopeArgs {
    /// Samples JSON with values.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Reconstruction to bound (required for images, checked for profiles).
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Output: lower and upper rows for profiles, the error bound for images.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    /// Candidate solution.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = OperatorArg::L1)]
    pub operator: OperatorArg,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepArg {
    Fraction,
    Eps,
    Size,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = SweepArg::Fraction)]
    pub sweep: SweepArg,
    /// Swept values (percentages for `fraction`).
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub values: Vec<f64>,
    /// Seeds per point.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long = "first-seed", default_value_t = 0)]
    pub first_seed: u64,
    /// Images with planar folds instead of 1D profiles.
    #[arg(long = "3d")]
    pub three_d: bool,
    /// Profile length, or image side for `--3d`.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 15)]
    pub corners: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long = "max-value", default_value_t = 10.0)]
    pub max_value: f64,
    #[arg(long = "perc-samples", default_value_t = 10.0)]
    pub perc_samples: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long = "add-neighbors")]
    pub add_neighbors: bool,
    #[arg(long = "add-boundary")]
    pub add_boundary: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV table of averaged metrics.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompressArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Edge detection threshold on second differences.
    #[arg(long, default_value_t = 5e-6)]
    pub tol: f64,
    #[arg(long = "add-boundary")]
    pub add_boundary: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DecompressArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = OperatorArg::L1diag)]
    pub operator: OperatorArg,
    /// Original image, for error metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SuperresArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Factor along both axes; overridden per axis by the next two flags.
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    #[arg(long = "factor-r")]
    pub factor_r: Option<usize>,
    #[arg(long = "factor-c")]
    pub factor_c: Option<usize>,
    /// Samples JSON marking the valid low-resolution pixels.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MultiframeArgs {
    /// Samples JSON per frame, current frame first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub frames: Vec<PathBuf>,
    /// JSON array of `{rotation, translation}` mapping each frame into the
    /// current camera.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub fx: f64,
    #[arg(long)]
    pub fy: f64,
    #[arg(long)]
    pub cx: f64,
    #[arg(long)]
    pub cy: f64,
    /// Frames to merge (default: all).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Noise bound per frame age.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub schedule: Vec<f64>,
    /// Merged samples JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also reconstruct the merged samples into this image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}
