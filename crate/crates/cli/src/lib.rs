//! Command-line front end for the `spsr` library.
//!
//! Every subcommand writes machine-readable `key=value` lines (or CSV) to
//! the supplied writer and logs to stderr.

pub mod commands;
pub mod error;
pub mod formats;
pub mod store;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "spsr", version, about = "Stochastic Poisson surface reconstruction")]
pub struct Cli {
    /// Worker threads (falls back to SPSR_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct a stochastic field from an oriented point cloud.
    Reconstruct(ReconstructArgs),
    /// Pointwise queries at the points of a CSV file.
    Query(QueryArgs),
    /// Probability that a region of sample points intersects the shape.
    Collide(CollideArgs),
    /// Resample points on the surface by Metropolis-Hastings.
    Repair(RepairArgs),
    /// Simulate a noisy scan of a mesh (or planar polylines).
    Scan(ScanArgs),
    /// Score candidate cameras by the uncertainty they would remove.
    NextView(NextViewArgs),
    /// Extract a level set of the mean or of the inside probability.
    Levelset(LevelsetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorKind {
    Zero,
    Sphere,
    Ellipsoid,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Oriented cloud (.xyzn or ASCII .ply).
    pub input: PathBuf,
    /// Output prefix.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Nodes per axis.
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.02)]
    pub sigma_g: f64,
    /// Normal noise standard deviation of the samples.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_n: f64,
    /// Requested eigenbasis size (clamped to the node count minus one).
    #[arg(long, default_value_t = 3000)]
    pub eigen_k: usize,
    /// Kernel width (default: grid spacing).
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, value_enum, default_value_t = PriorKind::Zero)]
    pub prior: PriorKind,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Prior centre `x,y[,z]` (default: cloud centroid).
    #[arg(long)]
    pub prior_center: Option<String>,
    /// Treat `f > 0` as inside.
    #[arg(long)]
    pub flip_sign: bool,
    /// Padding around the cloud, as a fraction of its extent.
    #[arg(long, default_value_t = 0.1)]
    pub padding: f64,
    /// Write grids with a binary payload (`.grid.bin`).
    #[arg(long)]
    pub binary_grids: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryKind {
    Inside,
    Surface,
    Ci68,
    Ci95,
    Ci997,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Field prefix written by `reconstruct`.
    pub field: PathBuf,
    /// Points CSV, `x,y[,z]` per line.
    pub points: PathBuf,
    #[arg(long, value_enum, default_value_t = QueryKind::Inside)]
    pub what: QueryKind,
    /// CSV output (default: stdout, with the summary on stderr).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollideArgs {
    pub field: PathBuf,
    /// Region sample points CSV.
    pub region: PathBuf,
    /// Monte-Carlo samples.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    pub field: PathBuf,
    /// Cloud providing the chain starting points.
    pub cloud: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Points to draw (default: as many as the cloud has).
    #[arg(short = 'n', long)]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Proposal standard deviation (default: grid spacing).
    #[arg(long)]
    pub sigma_prop: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    /// Camera position `x,y[,z]`.
    #[arg(long, allow_hyphen_values = true)]
    pub position: String,
    /// Viewing direction `x,y[,z]`.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: String,
    /// Cone half angle in radians.
    #[arg(long, default_value_t = 0.5)]
    pub half_angle: f64,
    /// Position noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_p: f64,
    /// Normal noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_n: f64,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// OBJ with faces, or with `l` polylines for a planar scan.
    pub mesh: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Rays to cast.
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub rays: usize,
    #[command(flatten)]
    pub camera: CameraArgs,
}

#[derive(Debug, Args)]
pub struct NextViewArgs {
    pub field: PathBuf,
    /// Cloud the field was reconstructed from.
    pub cloud: PathBuf,
    /// Candidates CSV `px,py,pz,dx,dy,dz,half_angle`.
    pub cameras: PathBuf,
    #[arg(long, default_value_t = spsr::apps::camera::DEFAULT_REPEATS)]
    pub repeats: usize,
    /// CSV output (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelsetSource {
    Mean,
    Pin,
}

#[derive(Debug, Args)]
pub struct LevelsetArgs {
    pub field: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelsetSource::Mean)]
    pub of: LevelsetSource,
    /// Iso value (default 0 for the mean, 0.5 for the inside probability).
    #[arg(long, allow_hyphen_values = true)]
    pub iso: Option<f64>,
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SPSR_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("SPSR_THREADS={v} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Some(n) = thread_count(cli.threads)? {
        // fails only when a pool already exists, which is fine
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
    let seed = cli.seed;
    match cli.command {
        Command::Reconstruct(a) => commands::reconstruct(&a, out),
        Command::Query(a) => commands::query(&a, out),
        Command::Collide(a) => commands::collide(&a, seed, out),
        Command::Repair(a) => commands::repair(&a, seed, out),
        Command::Scan(a) => commands::scan(&a, seed, out),
        Command::NextView(a) => commands::next_view(&a, seed, out),
        Command::Levelset(a) => commands::levelset(&a, out),
    }
}

/// Parses `args` and runs them, returning the process exit code. Help and
/// version requests exit with 0, bad flags with 1.
pub fn run_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
