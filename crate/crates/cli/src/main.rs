use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use warpopt::bench::SolverSpec;
use warpopt_cli::{cmd_bench, cmd_gradcheck, cmd_profile, cmd_solve, error_exit_code, ProblemRef, RunConfig};

#[derive(Parser)]
#[command(name = "warpopt", version, about = "Bound-constrained optimization by domain warping")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write a JSONL trace.
    Solve {
        #[arg(long)]
        problem: Option<String>,
        /// `adawarp`, `ppm`, `projgrad-baseline` or `fixed-sigma:<σ>`.
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Check gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run a benchmark campaign and write data profiles.
    Bench {
        #[arg(long)]
        jobs: Option<usize>,
        /// Comma-separated tolerances.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        #[arg(long)]
        budget: Option<u64>,
        /// Comma-separated solver names.
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<String>>,
        /// Comma-separated problem names (default: all).
        #[arg(long, value_delimiter = ',')]
        problems: Option<Vec<String>>,
    },
    /// Recompute profile.csv from a runs.jsonl file.
    Profile {
        #[arg(long)]
        runs: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Solve { problem, solver, epsilon, tau } => {
            if let Some(p) = problem {
                cfg.problem = Some(ProblemRef::Name(p));
            }
            if let Some(s) = solver {
                cfg.solver = s;
            }
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if tau.is_some() {
                cfg.tau = tau;
            }
            let out = cmd_solve(&cfg, &cli.out)?;
            let s = &out.summary;
            println!(
                "{} {}: {} eps={:.3e} evals={} -> {}",
                s.problem,
                s.solver,
                s.status,
                s.final_epsilon,
                s.total_evals,
                out.trace_path.display()
            );
            Ok(out.exit_code())
        }
        Command::Gradcheck { problem, points } => {
            if let Some(p) = problem {
                cfg.problem = Some(ProblemRef::Name(p));
            }
            let p = cfg.resolve_problem()?;
            let report = cmd_gradcheck(&p, points.unwrap_or(cfg.gradcheck_points), cfg.seed.unwrap_or(0))?;
            println!(
                "{}: objective {:.3e}, merit {:.3e} ({} points) {}",
                report.problem,
                report.objective_error,
                report.merit_error,
                report.points,
                if report.passed() { "ok" } else { "FAILED" }
            );
            Ok(report.exit_code())
        }
        Command::Bench { jobs, tau, budget, solvers, problems } => {
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            if let Some(t) = tau {
                cfg.taus = t;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(names) = solvers {
                cfg.solvers = names
                    .iter()
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<SolverSpec>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| warpopt_cli::ConfigError(e.to_string()))?;
            }
            if problems.is_some() {
                cfg.problems = problems;
            }
            let out = cmd_bench(&cfg, &cli.out)?;
            let failed = out.records.iter().filter(|r| r.error.is_some()).count();
            println!("{} records ({} failed) -> {}", out.records.len(), failed, out.csv_path.display());
            Ok(0)
        }
        Command::Profile { runs } => {
            cmd_profile(&runs, &cli.out)?;
            println!("{}", cli.out.join("profile.csv").display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("WARPOPT_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
