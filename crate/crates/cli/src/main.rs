mod commands;
mod config;
mod error;
mod trajectory;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use ttkoop::SpectralKind;

use config::{AbcConfig, DoubleWellConfig, MethodName, SamplingMode};
use error::{CliError, CliResult};

/// Tensor-train Koopman and transfer operator spectra.
#[derive(Parser)]
#[command(name = "ttkoop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a trajectory file and its metadata sidecar.
    Generate {
        #[command(subcommand)]
        system: System,
    },
    /// Eigenvalues and eigenfunctions of the Koopman operator.
    Edmd(AnalysisArgs),
    /// Canonical correlations between X and Y.
    Cca(AnalysisArgs),
    /// Recompute implied timescales of a results file for a new lag time.
    Timescales {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum System {
    /// Initial conditions of the ABC flow paired with their images.
    Abc(AbcArgs),
    /// Overdamped Langevin trajectory in a double-well potential.
    DoubleWell(DoubleWellArgs),
}

// Flags left unset are omitted so that values from --config survive.

#[derive(Args, Serialize)]
struct AbcArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_per_dim: Option<usize>,
    /// Flow time between a point and its image.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    dt_initial: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// `.csv` selects CSV, anything else the binary format.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct DoubleWellArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Integrator steps per recorded frame.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AnalysisArgs {
    /// JSON file with any of the keys below (snake_case); flags override it.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Basis specification (JSON).
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Separate basis for Y (cca only).
    #[arg(long)]
    basis_y: Option<PathBuf>,
    /// Frame lag for a single trajectory.
    #[arg(long)]
    lag: Option<usize>,
    /// Physical lag time for implied timescales.
    #[arg(long)]
    tau_phys: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Cross ranks (hocur): one value for all dimensions, or a comma list.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of eigenpairs to report.
    #[arg(long)]
    q: Option<usize>,
    /// Use the symmetric part of the reduced matrix (edmd only).
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    symmetrize: bool,
    /// Results JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of eigenfunction values, one row per eigenfunction.
    #[arg(long)]
    phi: Option<PathBuf>,
    /// CSV of snapshot coordinates and eigenfunction values (cca only).
    #[arg(long)]
    grid_eval: Option<PathBuf>,
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("TTK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation(format!("TTK_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate { system: System::Abc(args) } => {
            let cfg: AbcConfig = config::resolve(args.config.as_deref(), &args)?;
            commands::generate_abc(&cfg)
        }
        Command::Generate { system: System::DoubleWell(args) } => {
            let cfg: DoubleWellConfig = config::resolve(args.config.as_deref(), &args)?;
            commands::generate_double_well(&cfg)
        }
        Command::Edmd(args) => commands::analyse(SpectralKind::Edmd, config::resolve(args.config.as_deref(), &args)?),
        Command::Cca(args) => commands::analyse(SpectralKind::Cca, config::resolve(args.config.as_deref(), &args)?),
        Command::Timescales { results, tau, out } => commands::timescales(&results, tau, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
