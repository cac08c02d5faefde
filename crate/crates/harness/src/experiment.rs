//! Executing configs and writing their outputs.

use std::path::Path;

use dbgd::metrics::{stationarity_report, stationarity_report_optimal};
use dbgd::problems::{matrix_factorization_problem, quadratic_sanity_problem, toy_problem, ProblemSpec, SparsityPenalty, TOY_BOX};
use dbgd::rng::{seeded, standard_normal_vec};
use dbgd::solver::{direction_at, run, Method, MethodKind, RecordIterates, RunOutput, SolverConfig, TraceRecord};
use dbgd::verify::{default_fd_step, finite_diff_check, rate_fit, RateFit};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CaseStudyConfig, CaseThresholds, Cell, GridConfig, RatesConfig, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{num, opt_num, write_table, write_trace_file};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "DBGD_WORKERS";

/// Explicit value, else `DBGD_WORKERS`, else the config value.
pub fn resolve_workers(explicit: Option<usize>, from_config: Option<usize>) -> Result<Option<usize>> {
    if explicit.is_some() {
        return Ok(explicit);
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| HarnessError::config(WORKERS_ENV, format!("must be a positive integer (got '{v}')")))?;
        return Ok(Some(n));
    }
    Ok(from_config)
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(pool.install(job))
}

/// Metrics at the final iterate `x_K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalMetrics {
    pub f: f64,
    pub g: f64,
    pub grad_f_sq: f64,
    pub grad_g_sq: f64,
    /// The method's own multiplier at `x_K` (signed for BLOOP).
    pub lambda: f64,
    /// `‖∇f + λ∇g‖²` with that multiplier; `None` for BLOOP.
    pub d_sq: Option<f64>,
    /// Report-optimal multiplier and residual.
    pub lambda_opt: f64,
    pub d_sq_opt: f64,
    pub f_perp_sq: f64,
    pub f_par_sq: f64,
    pub cos_theta: Option<f64>,
}

fn run_method(trace: &TraceRecord, cell: &Cell) -> Method {
    match trace.meta.rule {
        Some(rule) => Method::Dbgd(rule),
        None => cell.method,
    }
}

pub fn final_metrics(problem: &ProblemSpec, method: &Method, x: &[f64], guard: f64) -> Result<FinalMetrics> {
    let dir = direction_at(problem, method, x, guard)?;
    let opt = stationarity_report_optimal(problem, x)?;
    let d_sq = match method.kind() {
        MethodKind::Bloop => None,
        _ => Some(stationarity_report(problem, x, dir.lambda)?.d_sq),
    };
    Ok(FinalMetrics {
        f: opt.f,
        g: opt.g,
        grad_f_sq: opt.grad_f_sq,
        grad_g_sq: opt.grad_g_sq,
        lambda: dir.lambda,
        d_sq,
        lambda_opt: opt.lambda,
        d_sq_opt: opt.d_sq,
        f_perp_sq: opt.f_perp_sq,
        f_par_sq: opt.f_par_sq,
        cos_theta: opt.cos_theta,
    })
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub output: RunOutput,
    pub last: FinalMetrics,
}

fn solver_config(cell: &Cell, run_cfg: &RunConfig, trace_every: usize, record: RecordIterates) -> SolverConfig {
    let mut cfg = SolverConfig::new(cell.method, run_cfg.step.into(), run_cfg.iterations)
        .with_guard(run_cfg.guard())
        .with_penalty_scaling(cell.scale_penalty_step)
        .with_trace_stride(trace_every)
        .with_record(if record == RecordIterates::All { RecordIterates::All } else { RecordIterates::Final });
    cfg.stop = run_cfg.stop;
    cfg
}

fn run_cell(problem: &ProblemSpec, cell: &Cell, cfg: &SolverConfig, x0: &[f64]) -> Result<CellResult> {
    let wrap = |e| HarnessError::in_cell(&cell.label, e);
    let output = run(problem, cfg, x0).map_err(wrap)?;
    let x = output.final_x.as_deref().expect("final iterate is always recorded");
    let last = final_metrics(problem, &run_method(&output.trace, cell), x, cfg.guard).map_err(|e| match e {
        HarnessError::Core(c) => wrap(c),
        other => other,
    })?;
    Ok(CellResult { cell: cell.clone(), output, last })
}

/// Runs every cell of a grid, in parallel.
pub fn execute_grid(config: &GridConfig, workers: Option<usize>) -> Result<Vec<CellResult>> {
    let problem = config.validate()?;
    let x0 = config.run.initial_point(problem.dim())?;
    let cells = config.cells();
    in_pool(workers, || {
        cells
            .par_iter()
            .map(|cell| {
                let cfg = solver_config(cell, &config.run, config.output.trace_every, config.output.record_iterates);
                run_cell(&problem, cell, &cfg, &x0)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub const SUMMARY_HEADER: [&str; 25] = [
    "cell",
    "method",
    "parameter",
    "iterations_run",
    "stopped_early",
    "eta",
    "beta",
    "final_f",
    "final_g",
    "final_grad_f_sq",
    "final_grad_g_sq",
    "final_lambda",
    "final_d_sq",
    "final_lambda_opt",
    "final_d_sq_opt",
    "final_f_perp_sq",
    "final_f_par_sq",
    "final_cos_theta",
    "best_k",
    "best_potential",
    "best_grad_g_sq",
    "best_d_sq",
    "best_lambda",
    "phi_clamps",
    "warnings",
];

fn summary_row(r: &CellResult) -> Vec<String> {
    let (o, m, b) = (&r.output, &r.last, &r.output.best);
    vec![
        r.cell.label.clone(),
        r.cell.family.to_string(),
        num(r.cell.parameter),
        o.iterations_run.to_string(),
        (o.stopped_early as u8).to_string(),
        num(o.eta),
        opt_num(o.beta),
        num(m.f),
        num(m.g),
        num(m.grad_f_sq),
        num(m.grad_g_sq),
        num(m.lambda),
        opt_num(m.d_sq),
        num(m.lambda_opt),
        num(m.d_sq_opt),
        num(m.f_perp_sq),
        num(m.f_par_sq),
        opt_num(m.cos_theta),
        b.k.to_string(),
        num(b.potential),
        num(b.grad_g_sq),
        num(b.d_sq),
        num(b.lambda),
        o.phi_clamps.to_string(),
        o.warnings.join("; "),
    ]
}

fn write_iterates(path: &Path, iterates: &[Vec<f64>]) -> Result<()> {
    let dim = iterates.first().map_or(0, Vec::len);
    let mut header = vec!["k".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = iterates
        .iter()
        .enumerate()
        .map(|(k, x)| std::iter::once(k.to_string()).chain(x.iter().map(|v| num(*v))).collect())
        .collect();
    write_table(path, &header, &rows)
}

/// One trace per cell, then `summary.csv`.
pub fn write_grid(dir: &Path, results: &[CellResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    results.par_iter().try_for_each(|r| -> Result<()> {
        write_trace_file(&r.output.trace, &dir.join(format!("{}.csv", r.cell.label)))?;
        if let Some(its) = &r.output.iterates {
            write_iterates(&dir.join(format!("{}-iterates.csv", r.cell.label)), its)?;
        }
        Ok(())
    })?;
    let rows: Vec<Vec<String>> = results.iter().map(summary_row).collect();
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    pub problem: String,
    pub x0: Vec<f64>,
    #[serde(flatten)]
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesReport {
    pub fits: Vec<RateEntry>,
    pub all_passed: bool,
}

pub fn execute_rates(config: &RatesConfig, workers: Option<usize>) -> Result<RatesReport> {
    let problems = config.validate()?;
    let jobs: Vec<(usize, f64)> =
        (0..problems.len()).flat_map(|i| config.p.iter().map(move |&p| (i, p))).collect();
    let fits = in_pool(workers, || {
        jobs.par_iter()
            .map(|&(i, p)| {
                let x0 = &config.problems[i].x0;
                rate_fit(&problems[i], x0, p, &config.k_grid)
                    .map(|fit| RateEntry { problem: problems[i].name().to_string(), x0: x0.clone(), fit })
                    .map_err(|e| HarnessError::in_cell(&format!("{} p={p}", problems[i].name()), e))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let all_passed = fits.iter().all(|f| f.fit.passed);
    Ok(RatesReport { fits, all_passed })
}

pub fn write_rates(dir: &Path, report: &RatesReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(dir.join("rates.json"), text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseClass {
    CaseI,
    CaseII,
    Unclassified,
}

impl CaseClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseClass::CaseI => "case_i",
            CaseClass::CaseII => "case_ii",
            CaseClass::Unclassified => "unclassified",
        }
    }
}

pub fn classify(m: &FinalMetrics, t: &CaseThresholds) -> CaseClass {
    if m.lambda <= t.case1_lambda_max && m.grad_f_sq <= t.case1_grad_f_sq_max {
        CaseClass::CaseI
    } else if m.cos_theta.is_some_and(|c| c <= t.case2_cos_max) && m.lambda > t.case2_lambda_min {
        CaseClass::CaseII
    } else {
        CaseClass::Unclassified
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub x0: Vec<f64>,
    pub output: RunOutput,
    pub last: FinalMetrics,
    pub class: CaseClass,
}

#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub runs: Vec<CaseResult>,
    pub warnings: Vec<String>,
}

pub fn execute_casestudy(config: &CaseStudyConfig, workers: Option<usize>) -> Result<CaseStudy> {
    let (problem, cell) = config.validate()?;
    let run_cfg = RunConfig {
        iterations: config.iterations,
        step: config.step,
        x0: None,
        x0_seed: None,
        x0_scale: None,
        guard: config.guard,
        stop: None,
    };
    let cfg = solver_config(&cell, &run_cfg, config.output.trace_every, config.output.record_iterates);
    let runs = in_pool(workers, || {
        config
            .initializations
            .par_iter()
            .enumerate()
            .map(|(i, x0)| {
                let label = Cell { label: format!("init-{i}"), ..cell.clone() };
                let r = run_cell(&problem, &label, &cfg, x0)?;
                let class = classify(&r.last, &config.thresholds);
                Ok(CaseResult { x0: x0.clone(), output: r.output, last: r.last, class })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut warnings = Vec::new();
    if runs.iter().all(|r| r.class == CaseClass::Unclassified) {
        warnings.push("no terminal point met either classification threshold".to_string());
    }
    Ok(CaseStudy { runs, warnings })
}

pub const CASESTUDY_HEADER: [&str; 12] = [
    "init",
    "x0",
    "final_x",
    "final_f",
    "final_g",
    "final_grad_f_sq",
    "final_grad_g_sq",
    "final_lambda",
    "final_f_perp_sq",
    "final_cos_theta",
    "best_potential",
    "classification",
];

fn join_point(x: &[f64]) -> String {
    x.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

pub fn write_casestudy(dir: &Path, study: &CaseStudy) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, r) in study.runs.iter().enumerate() {
        write_trace_file(&r.output.trace, &dir.join(format!("init-{i}.csv")))?;
    }
    let rows: Vec<Vec<String>> = study
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                join_point(&r.x0),
                join_point(r.output.final_x.as_deref().unwrap_or(&[])),
                num(r.last.f),
                num(r.last.g),
                num(r.last.grad_f_sq),
                num(r.last.grad_g_sq),
                num(r.last.lambda),
                num(r.last.f_perp_sq),
                opt_num(r.last.cos_theta),
                num(r.output.best.potential),
                r.class.as_str().to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("casestudy.csv"), &CASESTUDY_HEADER, &rows)
}

/// Worst finite-difference error of one built-in problem over 100 seeded points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub problem: String,
    pub points: usize,
    pub worst_rel_error: f64,
}

pub const GRADCHECK_POINTS: usize = 100;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// Built-in problems by CLI name: `toy`, `quadratic`, `matrix_factorization`
/// (both penalties, `n = r = 10`), or `all`.
pub fn gradcheck(name: &str, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = seeded(seed);
    let mut sets: Vec<(ProblemSpec, Vec<Vec<f64>>)> = Vec::new();
    let want = |n: &str| name == n || name == "all";
    if !["toy", "quadratic", "matrix_factorization", "all"].contains(&name) {
        return Err(HarnessError::config(
            "problem",
            format!("unknown problem '{name}' (expected toy, quadratic, matrix_factorization or all)"),
        ));
    }
    if want("toy") {
        let pts = (0..GRADCHECK_POINTS)
            .map(|_| vec![rng.random_range(-TOY_BOX..TOY_BOX), rng.random_range(-TOY_BOX..TOY_BOX)])
            .collect();
        sets.push((toy_problem(), pts));
    }
    if want("quadratic") {
        let pts = (0..GRADCHECK_POINTS).map(|_| standard_normal_vec(&mut rng, 10)).collect();
        sets.push((quadratic_sanity_problem(10)?, pts));
    }
    if want("matrix_factorization") {
        for penalty in [SparsityPenalty::SmoothL1, SparsityPenalty::LogSmooth] {
            let pts = (0..GRADCHECK_POINTS).map(|_| standard_normal_vec(&mut rng, 100)).collect();
            sets.push((matrix_factorization_problem(10, 10, 1.0, penalty, 0.1, seed)?, pts));
        }
    }
    sets.into_iter()
        .map(|(p, pts)| {
            let worst = pts.iter().try_fold(0.0_f64, |w, x: &Vec<f64>| {
                finite_diff_check(&p, x, default_fd_step(x)).map(|e| w.max(e))
            })?;
            Ok(GradCheck { problem: p.name().to_string(), points: pts.len(), worst_rel_error: worst })
        })
        .collect()
}
