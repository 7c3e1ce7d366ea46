use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mtdc_opf::case_file::load_case;
use mtdc_opf::matpower::import_matpower;
use mtdc_opf::matrices::{dump_coefficients, CoefficientSet};
use mtdc_opf::network::normalize_wind;
use mtdc_opf::pipeline::Outcome;
use mtdc_opf::recovery::RecoveredState;
use mtdc_opf::relaxation::{assemble, dump_problem};
use mtdc_opf::report::{Comparison, SolveReport};
use mtdc_opf::verifier::{brute_force_opf, check_shape, verify, DEFAULT_TOLERANCE};
use mtdc_opf::{solve_case, Error, NetworkCase, PipelineOptions};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_OPTIMAL: u8 = 3;
const EXIT_RECOVERY: u8 = 4;
const EXIT_VERIFICATION: u8 = 5;

#[derive(Parser)]
#[command(name = "mtdc-opf", version, about = "Optimal power flow for hybrid AC / multi-terminal DC grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case and print the report.
    Solve {
        case: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
        /// Also run the brute-force oracle with this many grid points per control (small cases only).
        #[arg(long)]
        oracle_resolution: Option<usize>,
    },
    /// Solve two cases and compare cost and losses.
    Compare {
        base: PathBuf,
        other: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
    },
    /// Print the assembled problem or the coefficient matrices.
    Dump {
        what: DumpKind,
        case: PathBuf,
    },
    /// Re-check a saved state (or a JSON solve report) against a case.
    Verify {
        case: PathBuf,
        state: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpKind {
    Problem,
    Matrices,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    rank_threshold: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for the oracle's grid jitter.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the iteration log to stderr.
    #[arg(long, short)]
    verbose: bool,
}

impl SolveArgs {
    fn pipeline(&self) -> PipelineOptions {
        let mut o = PipelineOptions::default();
        if let Some(v) = self.gap_tol {
            o.solver.gap_tol = v;
        }
        if let Some(v) = self.feas_tol {
            o.solver.feas_tol = v;
        }
        if let Some(v) = self.max_iter {
            o.solver.max_iter = v;
        }
        if let Some(v) = self.rank_threshold {
            o.rank_threshold = v;
        }
        o.solver.verbose = self.verbose;
        o
    }
}

fn read_case(path: &Path) -> Result<NetworkCase> {
    if path.extension().is_some_and(|e| e == "m") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map_or("case".into(), |s| s.to_string_lossy().into_owned());
        let case = import_matpower(&text, &name)?;
        case.validate()?;
        Ok(case)
    } else {
        load_case(path).with_context(|| format!("loading {}", path.display()))
    }
}

fn print<T: Serialize + std::fmt::Display>(value: &T, format: Format) -> Result<()> {
    match format {
        Format::Text => print!("{value}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn outcome_code(o: &Outcome) -> u8 {
    match o {
        Outcome::Verified => 0,
        Outcome::NotOptimal(_) => EXIT_NOT_OPTIMAL,
        Outcome::RecoveryFailed(_) => EXIT_RECOVERY,
        Outcome::VerificationFailed => EXIT_VERIFICATION,
    }
}

fn solve_report(path: &Path, args: &SolveArgs) -> Result<SolveReport> {
    let case = read_case(path)?;
    let out = solve_case(&case, &args.pipeline())?;
    Ok(SolveReport::new(&out))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { case, opts, oracle_resolution } => {
            let report = solve_report(&case, &opts)?;
            print(&report, opts.format)?;
            if let Some(res) = oracle_resolution {
                let c = normalize_wind(&read_case(&case)?)?;
                let oracle = brute_force_opf(&c, res, opts.seed)?;
                let sdp = report.state.as_ref().map(RecoveredState::objective);
                eprintln!(
                    "oracle: objective {:.8} over {} points ({} feasible); relaxation {}",
                    oracle.objective,
                    oracle.evaluated,
                    oracle.feasible,
                    sdp.map_or("-".into(), |v| format!("{v:.8}"))
                );
            }
            Ok(outcome_code(&report.outcome))
        }
        Command::Compare { base, other, opts } => {
            let a = solve_report(&base, &opts)?;
            let b = solve_report(&other, &opts)?;
            for r in [&a, &b] {
                let code = outcome_code(&r.outcome);
                if code != 0 {
                    eprintln!("{}: {:?}", r.case.name, r.outcome);
                    return Ok(code);
                }
            }
            let cmp = Comparison::new(&a, &b).context("verified reports carry a state")?;
            print(&cmp, opts.format)?;
            Ok(0)
        }
        Command::Dump { what, case } => {
            let case = normalize_wind(&read_case(&case)?)?;
            let text = match what {
                DumpKind::Problem => dump_problem(&assemble(&case)?),
                DumpKind::Matrices => dump_coefficients(&case, &CoefficientSet::build(&case)),
            };
            print!("{text}");
            Ok(0)
        }
        Command::Verify { case, state, tol, format } => {
            let case = normalize_wind(&read_case(&case)?)?;
            let text = std::fs::read_to_string(&state).with_context(|| format!("reading {}", state.display()))?;
            let st = parse_state(&text)?;
            check_shape(&case, &st)?;
            let report = verify(&case, &st, tol);
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text => {
                    println!(
                        "verification: {} (max residual {:.3e}, tolerance {:.0e})",
                        if report.pass { "pass" } else { "FAIL" },
                        report.max_residual,
                        report.tolerance
                    );
                    for v in &report.violations {
                        println!("  {:?} {}: {:.6} vs limit {:.6}", v.kind, v.subject, v.value, v.limit);
                    }
                }
            }
            Ok(if report.pass { 0 } else { EXIT_VERIFICATION })
        }
    }
}

/// Accepts either a bare state or a solve report carrying one under `state`.
fn parse_state(text: &str) -> Result<RecoveredState> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let inner = match value.get("state") {
        Some(s) if !s.is_null() => s.clone(),
        Some(_) => return Err(Error::Validation("report has no recovered state".into()).into()),
        None => value,
    };
    serde_json::from_value(inner).map_err(|e| {
        Error::Parse {
            line: 0,
            column: 0,
            message: e.to_string(),
        }
        .into()
    })
}

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Numerical(_)) => EXIT_NOT_OPTIMAL,
        Some(Error::Recovery(_)) => EXIT_RECOVERY,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
