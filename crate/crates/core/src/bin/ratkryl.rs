use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ratkryl::harness::{
    any_breakdown, default_slopes_path, emit, rate_sweep, run_experiment, write_records, write_slopes, ExperimentConfig, HarnessError,
};
use ratkryl::oracle::{detect_breakdown, explicit_basis, lsq_over_columns};
use ratkryl::problems::{make_problem, ProblemName};
use ratkryl::solvers::{lanczos_kr, rational_cg, AlphaSchedule};
use ratkryl::stopping::StoppingRule;

#[derive(Parser)]
#[command(name = "ratkryl", version, about = "Rational Krylov regularization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (method, noise, seed) cell and emit the records.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, applied after the config file; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Error-versus-noise sweep with fitted log-log slopes.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare solver residuals against the brute-force minimizer.
    #[command(hide = true)]
    OracleCheck {
        #[arg(long)]
        problem: ProblemName,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        steps: usize,
    },
    /// List the built-in test problems.
    ListProblems,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::Config(e.to_string())
    }
}

fn run(config: PathBuf, overrides: Vec<String>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&config, &overrides)?;
    let records = run_experiment(&cfg)?;
    match &cfg.output_path {
        Some(path) => emit(&records, cfg.format, path)?,
        None => write_records(&records, cfg.format, io::stdout().lock())?,
    }
    if cfg.strict && any_breakdown(&records) {
        return Err(Failure::Solver("a solver broke down (strict mode)".to_string()));
    }
    Ok(())
}

fn rates(config: PathBuf, overrides: Vec<String>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&config, &overrides)?;
    let report = rate_sweep(&cfg)?;
    match &cfg.output_path {
        Some(path) => {
            emit(&report.records, cfg.format, path)?;
            let slopes = cfg.slopes_path.clone().unwrap_or_else(|| default_slopes_path(path));
            let file = std::fs::File::create(&slopes).map_err(|e| Failure::Config(format!("{}: {e}", slopes.display())))?;
            write_slopes(&report.fits, file)?;
        }
        None => match &cfg.slopes_path {
            Some(slopes) => {
                let file = std::fs::File::create(slopes).map_err(|e| Failure::Config(format!("{}: {e}", slopes.display())))?;
                write_slopes(&report.fits, file)?;
            }
            None => write_slopes(&report.fits, io::stdout().lock())?,
        },
    }
    if cfg.strict && any_breakdown(&report.records) {
        return Err(Failure::Solver("a solver broke down (strict mode)".to_string()));
    }
    Ok(())
}

fn oracle_check(problem: ProblemName, size: usize, steps: usize) -> Result<(), Failure> {
    let p = make_problem(problem, size).map_err(|e| Failure::Config(e.to_string()))?;
    let sched = AlphaSchedule::PaperDefault;
    let budget = StoppingRule::budget(steps.max(1)).map_err(|e| Failure::Config(e.to_string()))?;
    let rc = rational_cg(&p.a, &p.y_exact, &sched, &budget).map_err(|e| Failure::Solver(e.to_string()))?;
    let lz = lanczos_kr(&p.a, &p.y_exact, &sched, &budget).map_err(|e| Failure::Solver(e.to_string()))?;
    let basis = explicit_basis(&p.a, &p.y_exact, &sched, steps);
    let rank_loss = detect_breakdown(&p.a, &p.y_exact, &sched, steps);

    let mut out = io::stdout().lock();
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |r| format!("{r:.6e}"));
    let _ = writeln!(out, "{:>3} {:>14} {:>14} {:>14} {:>10} {:>10}", "n", "oracle", "rational_cg", "lanczos_kr", "rel_rcg", "rel_lz");
    for n in 1..=basis.columns.len() {
        let (_, oracle) = lsq_over_columns(&p.a, &p.y_exact, &basis.columns[..n]);
        let r1 = rc.entry(n).map(|e| e.residual);
        let r2 = lz.entry(n).map(|e| e.residual);
        let rel = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |r| format!("{:.2e}", (r - oracle).abs() / oracle));
        let _ = writeln!(out, "{n:>3} {:>14} {:>14} {:>14} {:>10} {:>10}", fmt(Some(oracle)), fmt(r1), fmt(r2), rel(r1), rel(r2));
    }
    let _ = writeln!(out, "rank loss at n = {}", rank_loss.map_or_else(|| "none".to_string(), |n| n.to_string()));
    Ok(())
}

fn list_problems() {
    let mut out = io::stdout().lock();
    for name in ProblemName::ALL {
        let _ = writeln!(out, "{:<10} {}", name.as_str(), name.description());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Rates { config, overrides } => rates(config, overrides),
        Command::OracleCheck { problem, size, steps } => oracle_check(problem, size, steps),
        Command::ListProblems => {
            list_problems();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
