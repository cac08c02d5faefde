use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dbgd_harness::config::Config;
use dbgd_harness::experiment::{
    execute_casestudy, execute_grid, execute_rates, gradcheck, resolve_workers, write_casestudy, write_grid,
    write_rates, GRADCHECK_TOLERANCE,
};
use dbgd_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "dbgd", version, about = "Dynamic barrier gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method grid and write one trace per cell plus summary.csv.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iteration budget (overrides run.iterations).
        #[arg(long)]
        iterations: Option<usize>,
        /// Worker threads (overrides DBGD_WORKERS and output.workers).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit empirical convergence rates and write rates.json.
    Rates {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one method from several starting points and classify the endpoints.
    Casestudy {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Finite-difference check of a built-in problem's gradients.
    Gradcheck {
        /// toy, quadratic, matrix_factorization or all
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(dir) = out {
        cfg.output_mut().dir = dir;
    }
    Ok(cfg)
}

fn wrong_kind(expected: &str) -> HarnessError {
    HarnessError::config("experiment", format!("this command needs an '{expected}' config"))
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { config, out, iterations, workers } => {
            let Config::Grid(mut cfg) = load(&config, out)? else { return Err(wrong_kind("grid")) };
            if let Some(k) = iterations {
                cfg.run.iterations = k;
            }
            let results = execute_grid(&cfg, resolve_workers(workers, cfg.output.workers)?)?;
            write_grid(&cfg.output.dir, &results)?;
            for r in &results {
                for w in &r.output.warnings {
                    eprintln!("warning: {}: {w}", r.cell.label);
                }
            }
            println!("{} cells written to {}", results.len(), cfg.output.dir.display());
            Ok(0)
        }
        Command::Rates { config, out, workers } => {
            let Config::Rates(cfg) = load(&config, out)? else { return Err(wrong_kind("rates")) };
            let report = execute_rates(&cfg, resolve_workers(workers, cfg.output.workers)?)?;
            write_rates(&cfg.output.dir, &report)?;
            for f in &report.fits {
                println!(
                    "{} p={}: slope {:.3} (bound {:.3}) {}",
                    f.problem,
                    f.fit.p,
                    f.fit.slope,
                    f.fit.theoretical_slope + f.fit.tolerance,
                    if f.fit.passed { "pass" } else { "FAIL" }
                );
            }
            Ok(0)
        }
        Command::Casestudy { config, out, iterations, workers } => {
            let Config::Casestudy(mut cfg) = load(&config, out)? else { return Err(wrong_kind("casestudy")) };
            if let Some(k) = iterations {
                cfg.iterations = k;
            }
            let study = execute_casestudy(&cfg, resolve_workers(workers, cfg.output.workers)?)?;
            write_casestudy(&cfg.output.dir, &study)?;
            for (i, r) in study.runs.iter().enumerate() {
                println!("init {i} {:?}: {}", r.x0, r.class.as_str());
            }
            for w in &study.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Validate { config } => {
            Config::load(&config)?.validate()?;
            println!("{}: ok", config.display());
            Ok(0)
        }
        Command::Gradcheck { problem, seed } => {
            let mut code = 0;
            for c in gradcheck(&problem, seed)? {
                let ok = c.worst_rel_error <= GRADCHECK_TOLERANCE;
                println!("{}: worst relative error {:.3e} over {} points {}", c.problem, c.worst_rel_error, c.points, if ok { "ok" } else { "FAIL" });
                if !ok {
                    code = 1;
                }
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
