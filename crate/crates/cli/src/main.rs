use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchmg::experiment::{emit_report, render_report, run_global, run_single_patch, ExperimentKind, ExperimentSpec, ReportFormat};
use patchmg::Error;

/// Thread count for the parallel parts (patch setup, single-patch sweeps).
const THREADS_ENV: &str = "PATCHMG_THREADS";

#[derive(Parser)]
#[command(name = "patchmg", version, about = "Stokes multigrid experiments with vertex-patch smoothers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Local solvers on a single vertex patch.
    SinglePatch(RunArgs),
    /// Global geometric multigrid with patch smoothing.
    GlobalMg(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the base seed of the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the report is printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides the number of realizations.
    #[arg(long)]
    realizations: Option<usize>,
}

enum Failure {
    Config(String),
    Solver(String),
}

fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
        other => Failure::Solver(other.to_string()),
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::from_file(&args.config).map_err(classify)?;
    if spec.kind != kind {
        return Err(Failure::Config(format!("{} describes a {:?} experiment", args.config.display(), spec.kind)));
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.realizations {
        spec.realizations = n;
    }
    spec.validate().map_err(classify)?;
    let report = match kind {
        ExperimentKind::SinglePatch => run_single_patch(&spec),
        ExperimentKind::GlobalMg => run_global(&spec),
    }
    .map_err(classify)?;
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Markdown => ReportFormat::Markdown,
    };
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Solver(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{}.{}", spec.id, format.extension()));
            emit_report(&report, format, &path).map_err(|e| Failure::Solver(e.to_string()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", render_report(&report, format)),
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::SinglePatch(a) => (ExperimentKind::SinglePatch, a),
        Command::GlobalMg(a) => (ExperimentKind::GlobalMg, a),
    };
    match configure_threads().and_then(|()| run(kind, args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver error: {m}");
            ExitCode::from(3)
        }
    }
}
