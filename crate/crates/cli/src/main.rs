//! Command-line front end: convergence studies, spectrum and conditioning
//! tables, and SDC sweep tables, written as CSV plus a JSON manifest.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use csie::geom::CurveSpec;
use csie::solver::SchemeKind;

/// Environment variable selecting the worker thread count.
pub const THREADS_ENV: &str = "CSIE_THREADS";

/// Largest total step count and grid size accepted without `--force`.
const MAX_TOTAL_STEPS: usize = 2000;
pub const MAX_NODES: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "csie", version, about = "Combined source integral equation solver for 2D unsteady Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Error and GMRES iterations over a ladder of step counts.
    Converge(CommonArgs),
    /// Dense eigenvalues of the FI matrix on a circle against Fourier symbols.
    Spectrum(CommonArgs),
    /// Condition number of the FI matrix on a circle against the step size.
    Condition(ConditionArgs),
    /// SDC errors for every sweep count 0..=J.
    Sdc(CommonArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Curve, e.g. `circle:r=0.5`, `ellipse:a=0.5,b=0.25`, `star:r0=0.5,amp=0.15,lobes=6`.
    #[arg(long, default_value = "ellipse")]
    pub geometry: String,
    /// Marching scheme: `fi`, `pc:k=2` or `sdc:k=5,sweeps=4`.
    #[arg(long, default_value = "fi")]
    pub scheme: String,
    /// Boundary nodes.
    #[arg(long, default_value_t = 96)]
    pub n: usize,
    /// Comma-separated step counts (SDC: interval counts).
    #[arg(long = "N", value_delimiter = ',', default_value = "40,80,160")]
    pub steps: Vec<usize>,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_final: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed of the interior sample points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Angular offset of the exact solution's source ring.
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    /// Number of interior sample points for the error.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Step size for the spectrum command.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// GMRES relative residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub gmres_tol: f64,
    /// GMRES iteration cap per solve (default: the system size).
    #[arg(long)]
    pub gmres_maxit: Option<usize>,
    /// Solve the FI system with the rank-one deflation.
    #[arg(long)]
    pub deflate: bool,
    /// Permit PC(4).
    #[arg(long)]
    pub unstable_ok: bool,
    /// Use zero boundary data (the exact field switched off).
    #[arg(long)]
    pub zero_data: bool,
    /// Exceed the desk-scale size guards.
    #[arg(long)]
    pub force: bool,
    /// Exit with status 4 if the acceptance thresholds fail.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConditionArgs {
    #[arg(long, default_value = "circle:r=0.6")]
    pub geometry: String,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    /// Comma-separated step sizes.
    #[arg(long = "dt", value_delimiter = ',', default_value = "0.001,0.00316227766,0.01,0.0316227766,0.1")]
    pub dts: Vec<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub check: bool,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Check(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Check(m) => write!(f, "acceptance check failed: {m}"),
            Failure::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<csie::Error> for Failure {
    fn from(e: csie::Error) -> Self {
        match e {
            csie::Error::NotConverged { .. } | csie::Error::Breakdown { .. } => Failure::Solver(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Validated configuration shared by the solver commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub args: CommonArgs,
    pub curve: CurveSpec,
    pub scheme: SchemeKind,
}

impl RunConfig {
    fn new(args: CommonArgs) -> Result<Self, Failure> {
        let curve: CurveSpec = args.geometry.parse()?;
        let scheme: SchemeKind = args.scheme.parse()?;
        if args.steps.is_empty() || args.steps.contains(&0) {
            return Err(Failure::Config("--N needs positive step counts".into()));
        }
        if !(args.t_final > 0.0 && args.t_final.is_finite()) {
            return Err(Failure::Config(format!("--T must be positive, got {}", args.t_final)));
        }
        if args.samples == 0 {
            return Err(Failure::Config("--samples must be positive".into()));
        }
        let per_step = match scheme {
            SchemeKind::Sdc { stages, .. } => stages,
            _ => 1,
        };
        let total = args.steps.iter().max().copied().unwrap_or(0) * per_step;
        if !args.force && total > MAX_TOTAL_STEPS {
            return Err(Failure::Config(format!(
                "{total} total steps exceed {MAX_TOTAL_STEPS}; pass --force to run anyway"
            )));
        }
        if !args.force && args.n > MAX_NODES {
            return Err(Failure::Config(format!(
                "{} boundary nodes exceed {MAX_NODES}; pass --force to run anyway",
                args.n
            )));
        }
        Ok(Self { args, curve, scheme })
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v
            .parse()
            .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Converge(args) => commands::converge(&RunConfig::new(args)?),
        Command::Spectrum(args) => commands::spectrum(&RunConfig::new(args)?),
        Command::Sdc(args) => commands::sdc(&RunConfig::new(args)?),
        Command::Condition(args) => commands::condition(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csie: {e}");
            ExitCode::from(e.code())
        }
    }
}
