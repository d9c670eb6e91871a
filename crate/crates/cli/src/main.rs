//! Command-line front door for the sketched least-squares library:
//! single solves, the three statistical studies, twin-experiment
//! assimilation, and sketch calibration. Every command is deterministic
//! under --seed and writes CSV with a header row.

mod commands;
mod config;
mod table;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use config::{ConfigFile, SKETCH_KEYS, SKETCH_SECTION};

/// Failure categories, one exit code each: 2 for configuration problems,
/// 3 for file I/O, 4 for numerically dead runs. Success exits 0.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
            CliError::Numerical(m) => write!(f, "numerical: {m}"),
        }
    }
}

impl From<sketchls::io::IoError> for CliError {
    fn from(e: sketchls::io::IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<sketchls::sketch::SketchError> for CliError {
    fn from(e: sketchls::sketch::SketchError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<sketchls::tracker::TrackerError> for CliError {
    fn from(e: sketchls::tracker::TrackerError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<sketchls::gallery::GalleryError> for CliError {
    fn from(e: sketchls::gallery::GalleryError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<sketchls::wls::WlsError> for CliError {
    fn from(e: sketchls::wls::WlsError) -> Self {
        match e {
            sketchls::wls::WlsError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<sketchls::shallow_water::ShallowWaterError> for CliError {
    fn from(e: sketchls::shallow_water::ShallowWaterError) -> Self {
        match e {
            sketchls::shallow_water::ShallowWaterError::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<sketchls::solver::SolverError> for CliError {
    fn from(e: sketchls::solver::SolverError) -> Self {
        use sketchls::solver::SolverError::*;
        match e {
            NonFinite { .. } => CliError::Numerical(e.to_string()),
            Wls(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<sketchls::fourdvar::FourDVarError> for CliError {
    fn from(e: sketchls::fourdvar::FourDVarError) -> Self {
        use sketchls::fourdvar::FourDVarError::*;
        match e {
            NonFinite { .. } => CliError::Numerical(e.to_string()),
            ShallowWater(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<sketchls::experiments::ExperimentError> for CliError {
    fn from(e: sketchls::experiments::ExperimentError) -> Self {
        use sketchls::experiments::ExperimentError::*;
        match e {
            Solver(inner) => inner.into(),
            Wls(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sketchls",
    version,
    about = "Sketched least-squares solving, estimator studies, and toy assimilation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one weighted least-squares system from MatrixMarket files
    Solve(SolveArgs),
    /// Estimator-consistency study over matrix families and sketch methods
    Consistency(ConsistencyArgs),
    /// Credible-interval coverage study with checkpointed re-runs
    Coverage(CoverageArgs),
    /// Stopping-error frequency study
    Stopping(StoppingArgs),
    /// Shallow-water twin-experiment assimilation
    Assimilate(AssimilateArgs),
    /// Monte Carlo calibration of sketch tail constants
    Calibrate(CalibrateArgs),
}

/// Unset flags fall back to the config file (section named after the
/// subcommand, sketch constants also in [sketch]), then to the default
/// noted on each flag.
#[derive(clap::Args)]
pub struct SolveArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Coefficient matrix, MatrixMarket format
    #[arg(long)]
    pub(crate) matrix: Option<PathBuf>,
    /// Right-hand side, single-column MatrixMarket
    #[arg(long)]
    pub(crate) rhs: Option<PathBuf>,
    /// Optional weight: single column = diagonal, square = dense SPD
    #[arg(long)]
    pub(crate) weight: Option<PathBuf>,
    /// Sketch method: gaussian | achlioptas | fjlt [default: gaussian]
    #[arg(long)]
    pub(crate) sketch: Option<String>,
    /// Tail constant C override [default: the method's]
    #[arg(long)]
    pub(crate) sketch_c: Option<f64>,
    /// Tail scale omega override [default: 1]
    #[arg(long)]
    pub(crate) sketch_omega: Option<f64>,
    /// Interval tightening factor [default: 1]
    #[arg(long)]
    pub(crate) eta: Option<f64>,
    /// Embedding dimension [default: 20]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Smallest window length [default: 1]
    #[arg(long)]
    pub(crate) lambda1: Option<usize>,
    /// Largest window length [default: 100]
    #[arg(long)]
    pub(crate) lambda2: Option<usize>,
    /// Interval credibility level [default: 0.05]
    #[arg(long)]
    pub(crate) alpha: Option<f64>,
    /// Stopping target for the windowed mean [default: 1e-8]
    #[arg(long)]
    pub(crate) upsilon: Option<f64>,
    /// Late-stop gap delta_I [default: 0.9]
    #[arg(long = "deltaI")]
    pub(crate) delta_i: Option<f64>,
    /// Early-stop gap delta_II [default: 1.1]
    #[arg(long = "deltaII")]
    pub(crate) delta_ii: Option<f64>,
    /// Late-error budget xi_I [default: 0.01]
    #[arg(long = "xiI")]
    pub(crate) xi_i: Option<f64>,
    /// Early-error budget xi_II [default: 0.01]
    #[arg(long = "xiII")]
    pub(crate) xi_ii: Option<f64>,
    /// Iteration budget [default: 1000]
    #[arg(long)]
    pub(crate) max_iters: Option<u64>,
    /// Also record exact gradients and projection diagnostics
    #[arg(long)]
    pub(crate) oracle: bool,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Replace negative interval lower bounds by 1e-16 in the CSV
    #[arg(long)]
    pub(crate) clamp_lower: bool,
    /// Output CSV path [default: solve.csv]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct ConsistencyArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Comma-separated matrix families [default: all six]
    #[arg(long)]
    pub(crate) generators: Option<String>,
    /// Comma-separated sketch methods [default: all three]
    #[arg(long)]
    pub(crate) methods: Option<String>,
    /// System rows [default: 256]
    #[arg(long)]
    pub(crate) rows: Option<usize>,
    /// System columns [default: 128]
    #[arg(long)]
    pub(crate) cols: Option<usize>,
    /// Embedding dimension [default: 20]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Smallest window length [default: 1]
    #[arg(long)]
    pub(crate) lambda1: Option<usize>,
    /// Largest window length [default: 100]
    #[arg(long)]
    pub(crate) lambda2: Option<usize>,
    /// Interval credibility level [default: 0.05]
    #[arg(long)]
    pub(crate) alpha: Option<f64>,
    /// Iterations per cell [default: 2000]
    #[arg(long)]
    pub(crate) iters: Option<u64>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Feed exact values to the tracker (harness self-check)
    #[arg(long)]
    pub(crate) oracle_fed: bool,
    /// Detail CSV path; percentile summary lands next to it [default: consistency.csv]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct CoverageArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// System rows [default: 512]
    #[arg(long)]
    pub(crate) rows: Option<usize>,
    /// System columns [default: 256]
    #[arg(long)]
    pub(crate) cols: Option<usize>,
    /// Embedding dimension [default: 25]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Constant window length [default: 15]
    #[arg(long)]
    pub(crate) lambda: Option<usize>,
    /// Interval tightening factor [default: 1]
    #[arg(long)]
    pub(crate) eta: Option<f64>,
    /// Interval credibility level [default: 0.05]
    #[arg(long)]
    pub(crate) alpha: Option<f64>,
    /// Sketch method [default: gaussian]
    #[arg(long)]
    pub(crate) sketch: Option<String>,
    /// Number of checkpointed intervals [default: 50]
    #[arg(long)]
    pub(crate) checkpoints: Option<usize>,
    /// Re-runs per checkpoint [default: 200]
    #[arg(long)]
    pub(crate) reruns: Option<usize>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Oracle-fed replay mode (harness self-check)
    #[arg(long)]
    pub(crate) oracle_fed: bool,
    /// Per-checkpoint CSV path; summary lands next to it [default: coverage.csv]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct StoppingArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Comma-separated matrix families [default: all six]
    #[arg(long)]
    pub(crate) generators: Option<String>,
    /// Comma-separated sketch methods [default: all three]
    #[arg(long)]
    pub(crate) methods: Option<String>,
    /// System rows [default: 256]
    #[arg(long)]
    pub(crate) rows: Option<usize>,
    /// System columns [default: 128]
    #[arg(long)]
    pub(crate) cols: Option<usize>,
    /// Embedding dimension [default: 20]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Smallest window length [default: 1]
    #[arg(long)]
    pub(crate) lambda1: Option<usize>,
    /// Largest window length [default: 100]
    #[arg(long)]
    pub(crate) lambda2: Option<usize>,
    /// Interval credibility level [default: 0.05]
    #[arg(long)]
    pub(crate) alpha: Option<f64>,
    /// Iterations per cell [default: 2000]
    #[arg(long)]
    pub(crate) iters: Option<u64>,
    /// Stopping target [default: 100]
    #[arg(long)]
    pub(crate) upsilon: Option<f64>,
    /// Late-stop gap delta_I [default: 0.9]
    #[arg(long = "deltaI")]
    pub(crate) delta_i: Option<f64>,
    /// Early-stop gap delta_II [default: 1.1]
    #[arg(long = "deltaII")]
    pub(crate) delta_ii: Option<f64>,
    /// Late-error budget xi_I [default: 0.01]
    #[arg(long = "xiI")]
    pub(crate) xi_i: Option<f64>,
    /// Early-error budget xi_II [default: 0.01]
    #[arg(long = "xiII")]
    pub(crate) xi_ii: Option<f64>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Feed exact values to the tracker (harness self-check)
    #[arg(long)]
    pub(crate) oracle_fed: bool,
    /// Per-cell CSV path; pooled summary lands next to it [default: stopping.csv]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct AssimilateArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Grid cells [default: 40]
    #[arg(long)]
    pub(crate) nc: Option<usize>,
    /// Observation time points [default: 20]
    #[arg(long)]
    pub(crate) nt: Option<usize>,
    /// Model time step [default: 1e-3]
    #[arg(long)]
    pub(crate) dt: Option<f64>,
    /// Grid spacing [default: 1]
    #[arg(long)]
    pub(crate) dx: Option<f64>,
    /// Boundary handling: periodic | clamped [default: periodic]
    #[arg(long)]
    pub(crate) boundary: Option<String>,
    /// Observation noise level [default: 1]
    #[arg(long)]
    pub(crate) noise_sigma: Option<f64>,
    /// Sketch method [default: achlioptas]
    #[arg(long)]
    pub(crate) sketch: Option<String>,
    /// Tail constant C override [default: the method's]
    #[arg(long)]
    pub(crate) sketch_c: Option<f64>,
    /// Tail scale omega override [default: 1]
    #[arg(long)]
    pub(crate) sketch_omega: Option<f64>,
    /// Interval tightening factor [default: 1]
    #[arg(long)]
    pub(crate) eta: Option<f64>,
    /// Embedding dimension [default: 20]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Smallest window length [default: 1]
    #[arg(long)]
    pub(crate) lambda1: Option<usize>,
    /// Largest window length [default: 100]
    #[arg(long)]
    pub(crate) lambda2: Option<usize>,
    /// Interval credibility level [default: 0.05]
    #[arg(long)]
    pub(crate) alpha: Option<f64>,
    /// Stopping target per problem row: upsilon = scale * Nc * (Nt + 1) [default: 1e-9]
    #[arg(long)]
    pub(crate) upsilon_scale: Option<f64>,
    /// Late-stop gap delta_I [default: 0.9]
    #[arg(long = "deltaI")]
    pub(crate) delta_i: Option<f64>,
    /// Early-stop gap delta_II [default: 1.1]
    #[arg(long = "deltaII")]
    pub(crate) delta_ii: Option<f64>,
    /// Late-error budget xi_I [default: 0.95]
    #[arg(long = "xiI")]
    pub(crate) xi_i: Option<f64>,
    /// Early-error budget xi_II [default: 0.95]
    #[arg(long = "xiII")]
    pub(crate) xi_ii: Option<f64>,
    /// Iteration budget [default: 4000]
    #[arg(long)]
    pub(crate) max_iters: Option<u64>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Replace negative interval lower bounds by 1e-16 in the CSV
    #[arg(long)]
    pub(crate) clamp_lower: bool,
    /// Trace CSV path [default: assimilate.csv]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct CalibrateArgs {
    /// Config file with key=value sections
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Sketch method to calibrate [default: gaussian]
    #[arg(long)]
    pub(crate) sketch: Option<String>,
    /// Ambient dimension [default: 512]
    #[arg(long)]
    pub(crate) n: Option<usize>,
    /// Embedding dimension [default: 20]
    #[arg(long)]
    pub(crate) p: Option<usize>,
    /// Monte Carlo draws [default: 100000]
    #[arg(long)]
    pub(crate) trials: Option<usize>,
    /// Comma-separated deviation levels to fit [default: 0.25,0.5,1.0]
    #[arg(long)]
    pub(crate) epsilons: Option<String>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Config-fragment output path [default: calibration.conf]
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

fn config_path(cmd: &Cmd) -> Option<&PathBuf> {
    match cmd {
        Cmd::Solve(a) => a.config.as_ref(),
        Cmd::Consistency(a) => a.config.as_ref(),
        Cmd::Coverage(a) => a.config.as_ref(),
        Cmd::Stopping(a) => a.config.as_ref(),
        Cmd::Assimilate(a) => a.config.as_ref(),
        Cmd::Calibrate(a) => a.config.as_ref(),
    }
}

/// Every config key must name a real flag of its section's subcommand
/// (or a shared sketch constant), so typos fail loudly instead of being
/// silently ignored.
fn validate_config(file: &ConfigFile) -> Result<(), CliError> {
    let root = Cli::command();
    for (section, keys) in file.sections() {
        if section == SKETCH_SECTION {
            for key in keys.keys() {
                if !SKETCH_KEYS.iter().any(|(k, _)| k == key) {
                    return Err(CliError::Config(format!(
                        "unknown key '{key}' in [{SKETCH_SECTION}]"
                    )));
                }
            }
            continue;
        }
        let sub = root
            .find_subcommand(section)
            .ok_or_else(|| CliError::Config(format!("unknown config section [{section}]")))?;
        for key in keys.keys() {
            let known = sub
                .get_arguments()
                .filter_map(|a| a.get_long())
                .any(|long| long == key);
            if !known {
                return Err(CliError::Config(format!(
                    "unknown key '{key}' in [{section}]; keys mirror the subcommand's flags"
                )));
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match config_path(&cli.command) {
        Some(path) => {
            let file = ConfigFile::load(path)?;
            validate_config(&file)?;
            Some(file)
        }
        None => None,
    };
    let file = file.as_ref();
    match cli.command {
        Cmd::Solve(args) => commands::solve(&args, file),
        Cmd::Consistency(args) => commands::consistency(&args, file),
        Cmd::Coverage(args) => commands::coverage(&args, file),
        Cmd::Stopping(args) => commands::stopping(&args, file),
        Cmd::Assimilate(args) => commands::assimilate(&args, file),
        Cmd::Calibrate(args) => commands::calibrate(&args, file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
