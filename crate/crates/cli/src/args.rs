use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "rieszcap", version, about = "Riesz capacities, decay rates and densities of point clouds")]
#[command(args_override_self = true)]
pub struct Cli {
    /// TOML file of `flag = value` pairs applied before the command line.
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Run every stage on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Write a point cloud to CSV (with a `.meta` sidecar) or JSON.
    Gen(GenArgs),
    /// Equilibrium capacity of a cloud, or the exact sphere value.
    Capacity(CapacityArgs),
    /// Capacity sweep towards p = d with decay ratios and the extrapolated limit.
    Decay(DecayArgs),
    /// First- and second-order densities.
    Density(DensityArgs),
    /// Run a property suite; exit status 1 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Args, Serialize)]
pub struct OutArg {
    /// Output file; `.json` selects JSON, anything else CSV. Stdout if absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum GenKind {
    /// Points on the unit sphere S^d weighted by surface measure.
    Sphere {
        #[arg(long)]
        d: usize,
        #[arg(long = "N", alias = "n-points")]
        n_points: usize,
        /// Ambient dimension, default d + 1.
        #[arg(long)]
        ambient: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Midpoint grid on the unit d-cube.
    Cube {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        /// Ambient dimension, default d.
        #[arg(long)]
        ambient: Option<usize>,
        /// Translation, one value per ambient coordinate.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        offset: Vec<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Concatenation of saved clouds.
    Union {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Depth-k cells of a self-similar attractor.
    Ifs {
        #[command(flatten)]
        set: IfsChoice,
        #[arg(long)]
        depth: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct IfsChoice {
    /// Middle-thirds Cantor set.
    #[arg(long)]
    pub cantor: bool,
    /// Four-corner planar dust with ratio 1/4.
    #[arg(long)]
    pub dust: bool,
    /// JSON file holding an IFS (`n`, `maps` with `ratio`, `rotation`, `offset`).
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum PolicyKind {
    CellBall,
    CellSelfEnergy,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagArgs {
    /// Diagonal model for the self-interaction of each point's cell.
    #[arg(long, value_enum, default_value_t = PolicyKind::CellSelfEnergy)]
    pub diag_policy: PolicyKind,
    /// Diagonal constant c. Without it, `capacity` uses 1 and `decay`
    /// calibrates at the largest grid exponent when d is an integer.
    #[arg(long, conflicts_with = "calibrate_at")]
    pub diag_c: Option<f64>,
    /// Calibrate c against the exact sphere capacity at this exponent.
    #[arg(long, value_name = "P_REF")]
    pub calibrate_at: Option<f64>,
    /// Sphere sample size for calibration, default the cloud size.
    #[arg(long)]
    pub calibration_points: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    #[arg(long, value_name = "PATH", required_unless_present = "exact_sphere")]
    pub cloud: Option<PathBuf>,
    /// Closed-form capacity of the unit sphere S^d.
    #[arg(long, requires = "d")]
    pub exact_sphere: bool,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub diag: DiagArgs,
    /// Exit 0 even when the solver stops above tolerance.
    #[arg(long)]
    pub allow_nonconverged: bool,
    /// CSV of equilibrium weights.
    #[arg(long, value_name = "PATH")]
    pub weights_out: Option<PathBuf>,
    /// Binary kernel matrix dump.
    #[arg(long, value_name = "PATH")]
    pub matrix_out: Option<PathBuf>,
    /// JSON summary.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum SchemeArg {
    Last,
    LinearInGap,
    Richardson,
}

#[derive(Debug, Args, Serialize)]
pub struct DecayArgs {
    #[arg(long, value_name = "PATH", conflicts_with_all = ["exact_sphere", "ifs", "figures"])]
    pub cloud: Option<PathBuf>,
    #[arg(long, requires = "d", conflicts_with_all = ["ifs", "figures"])]
    pub exact_sphere: bool,
    #[arg(long)]
    pub d: Option<usize>,
    /// Certified lower-bound table for a built-in self-similar set.
    #[arg(long, value_name = "NAME", value_parser = ["cantor", "dust"], conflicts_with = "figures")]
    pub ifs: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "8,10,12")]
    pub depths: Vec<usize>,
    /// Exact-mode data tables for d = 1, 2, 3 written into `--out-dir`.
    #[arg(long, requires = "out_dir")]
    pub figures: bool,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Points per figure table.
    #[arg(long, default_value_t = 199)]
    pub figure_points: usize,
    /// Explicit exponents; overrides the gap grid.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Largest gap d - p of the grid.
    #[arg(long, default_value_t = 0.5)]
    pub first_gap: f64,
    /// Smallest gap d - p of the grid.
    #[arg(long, default_value_t = 0.02)]
    pub last_gap: f64,
    /// Grid size; gaps are geometric between first and last.
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Richardson)]
    pub scheme: SchemeArg,
    #[command(flatten)]
    pub diag: DiagArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum DensityKindArg {
    First,
    Second,
    SecondLog,
    SecondUpper,
    Ahlfors,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long, value_name = "PATH")]
    pub cloud: PathBuf,
    #[arg(long, value_enum, default_value_t = DensityKindArg::Second)]
    pub kind: DensityKindArg,
    /// Dimension d, default the cloud's.
    #[arg(long)]
    pub d: Option<f64>,
    /// Single center (point index).
    #[arg(long, conflicts_with = "average")]
    pub center: Option<usize>,
    /// Average over this many centers drawn from the weights.
    #[arg(long, default_value_t = 256)]
    pub average: usize,
    /// Gaps d - p of the p-form schedule.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    pub gaps: Vec<f64>,
    /// η schedule of the log form, default six values near the floor.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,
    /// Largest radius of the first-order grid.
    #[arg(long, default_value_t = 0.5)]
    pub r_max: f64,
    #[arg(long, default_value_t = 3.0)]
    pub floor_factor: f64,
    #[arg(long, default_value_t = 0.5)]
    pub floor_quantile: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Richardson)]
    pub scheme: SchemeArg,
    /// CSV of per-center traces.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// subadditivity, gotz, monotonic, scaling, measure-scaling, ifs-weights,
    /// density-lemmas, invariants or all.
    pub suite: String,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    /// Monotonicity on exact sphere curves instead of numeric ones.
    #[arg(long)]
    pub exact: bool,
    /// Sphere dimension for monotonicity, default 1, 2 and 3.
    #[arg(long)]
    pub d: Option<usize>,
    /// JSON report.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}
