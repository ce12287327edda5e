//! `reserve`: classical and hybrid fuzzy claims reserving from a CSV triangle.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use reserving_core::{
    build_report, parse_triangle, Command, ErrorCategory, Estimator, Metadata, OutputFormat,
    Report, ReserveError, RunConfig,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "reserve",
    version,
    about = "Claims reserving with classical and hybrid fuzzy log-Poisson models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the classical log-Poisson model and run the dispersion test.
    FitClassical(RunArgs),
    /// Run the full hybrid pipeline and report the fuzzy reserve.
    FitHybrid(RunArgs),
    /// Fit both models and compare their goodness of fit and reserves.
    Compare(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mle,
    #[value(alias = "least-squares")]
    Ls,
}

#[derive(Args)]
struct RunArgs {
    /// Triangle CSV: one row per origin year, incremental payments.
    #[arg(long)]
    input: PathBuf,
    /// Risk-aversion parameter for the crisp reserve, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pi: f64,
    /// Stopping tolerance on the largest parameter change per sweep.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Maximum number of fuzzy least-squares sweeps.
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Classical estimator.
    #[arg(long, value_enum, default_value = "mle")]
    estimator: EstimatorArg,
    /// Exit with status 3 when the iteration cap is reached.
    #[arg(long)]
    strict: bool,
    /// Include residuals, fuzzified input and the objective trace.
    #[arg(long)]
    emit_intermediates: bool,
    /// Write report files here instead of printing to stdout. Required for CSV.
    #[arg(long, env = "RESERVE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Model(ReserveError),
}

impl From<ReserveError> for Failure {
    fn from(e: ReserveError) -> Self {
        Failure::Model(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Model(e) => match e.category() {
                ErrorCategory::Usage => EXIT_USAGE,
                ErrorCategory::Data => EXIT_DATA,
                ErrorCategory::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}

fn config(args: &RunArgs) -> RunConfig {
    RunConfig {
        input_path: args.input.display().to_string(),
        pi: args.pi,
        tol: args.tol,
        max_iter: args.max_iter,
        output_format: match args.format {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Text => OutputFormat::Text,
        },
        estimator: match args.estimator {
            EstimatorArg::Mle => Estimator::Mle,
            EstimatorArg::Ls => Estimator::LeastSquares,
        },
        emit_intermediates: args.emit_intermediates,
        strict: args.strict,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(report: &Report, args: &RunArgs) -> Result<(), Failure> {
    if let Some(dir) = &args.output_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    match (args.format, &args.output_dir) {
        (FormatArg::Json, None) => print!("{}", render::json(report)),
        (FormatArg::Json, Some(dir)) => write_file(dir, "report.json", &render::json(report))?,
        (FormatArg::Text, None) => print!("{}", render::text(report)),
        (FormatArg::Text, Some(dir)) => write_file(dir, "report.txt", &render::text(report))?,
        (FormatArg::Csv, None) => {
            return Err(Failure::Usage(
                "CSV output writes one file per table; pass --output-dir or set RESERVE_OUTPUT_DIR"
                    .into(),
            ))
        }
        (FormatArg::Csv, Some(dir)) => {
            for (name, table) in render::csv_tables(report) {
                write_file(dir, name, &table)?;
            }
        }
    }
    Ok(())
}

fn run(command: Command, args: &RunArgs) -> Result<(), Failure> {
    let cfg = config(args);
    cfg.validate()?;
    let bytes = fs::read(&args.input)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.input.display())))?;
    let source = String::from_utf8(bytes.clone())
        .map_err(|_| ReserveError::RaggedShape("input is not valid UTF-8".into()))?;
    let triangle = parse_triangle(&source)?;
    let metadata = Metadata {
        tool: env!("CARGO_BIN_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        input_sha256: hex::encode(Sha256::digest(&bytes)),
        config: cfg,
    };
    let report = build_report(&triangle, metadata)?;
    emit(&report, args)?;
    if !report.converged() {
        let iterations = report
            .hybrid
            .as_ref()
            .map_or(report.classical.iterations, |h| h.iterations);
        eprintln!(
            "warning: iteration cap reached after {iterations} sweeps; results are not converged"
        );
        if args.strict {
            return Err(ReserveError::NotConverged { iterations }.into());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, args) = match &cli.command {
        Cmd::FitClassical(a) => (Command::FitClassical, a),
        Cmd::FitHybrid(a) => (Command::FitHybrid, a),
        Cmd::Compare(a) => (Command::Compare, a),
    };
    match run(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Model(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
