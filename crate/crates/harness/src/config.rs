//! Experiment configuration files.
//!
//! A config is one JSON object whose `experiment` field selects the schema:
//! `grid` (method grids on one problem), `rates` (empirical rate fits) or
//! `casestudy` (one method from several starting points). Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use dbgd::direction::PhiRule;
use dbgd::problems::{
    gaussian_init, matrix_factorization_problem, quadratic_sanity_problem, toy_problem, ProblemSpec, SparsityPenalty,
};
use dbgd::solver::{Method, RecordIterates, StepMode, StopTolerances};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Config {
    Grid(GridConfig),
    Rates(RatesConfig),
    Casestudy(CaseStudyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Toy,
    Quadratic {
        n: usize,
    },
    MatrixFactorization {
        n: usize,
        r: usize,
        alpha: f64,
        variant: SparsityPenalty,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_noise() -> f64 {
    0.1
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        Ok(match *self {
            ProblemConfig::Toy => toy_problem(),
            ProblemConfig::Quadratic { n } => quadratic_sanity_problem(n)?,
            ProblemConfig::MatrixFactorization { n, r, alpha, variant, noise_std, seed } => {
                matrix_factorization_problem(n, r, alpha, variant, noise_std, seed)?
            }
        })
    }
}

/// One method family with a grid over its main parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodEntry {
    /// `φ = β‖∇g‖²` for every `β` in the grid.
    Dbgd { beta: Vec<f64> },
    DynamicBarrierMin {
        alpha: f64,
        beta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g_star: Option<f64>,
    },
    LowerLinearization {
        eta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g_star: Option<f64>,
    },
    Penalty {
        lambda: Vec<f64>,
        #[serde(default = "yes")]
        scale_step: bool,
    },
    Bloop { beta: Vec<f64> },
}

fn yes() -> bool {
    true
}

/// One concrete run of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// File-name-safe label, e.g. `dbgd-beta-0.5`.
    pub label: String,
    pub family: &'static str,
    pub parameter: f64,
    pub method: Method,
    pub scale_penalty_step: bool,
}

fn param_label(family: &str, name: &str, v: f64) -> String {
    format!("{family}-{name}-{v}")
}

impl MethodEntry {
    fn grid(&self) -> &[f64] {
        match self {
            MethodEntry::Dbgd { beta } | MethodEntry::DynamicBarrierMin { beta, .. } | MethodEntry::Bloop { beta } => beta,
            MethodEntry::LowerLinearization { eta, .. } => eta,
            MethodEntry::Penalty { lambda, .. } => lambda,
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.grid()
            .iter()
            .map(|&v| {
                let (family, pname, method, scale) = match *self {
                    MethodEntry::Dbgd { .. } => ("dbgd", "beta", Method::Dbgd(PhiRule::GradNormSquared { beta: v }), true),
                    MethodEntry::DynamicBarrierMin { alpha, g_star, .. } => (
                        "dbgd-min",
                        "beta",
                        Method::Dbgd(PhiRule::DynamicBarrierMin { alpha, beta: v, g_star }),
                        true,
                    ),
                    MethodEntry::LowerLinearization { g_star, .. } => {
                        ("dbgd-lin", "eta", Method::Dbgd(PhiRule::LowerLinearization { g_star, eta: v }), true)
                    }
                    MethodEntry::Penalty { scale_step, .. } => {
                        ("penalty", "lambda", Method::Penalty { lambda: v }, scale_step)
                    }
                    MethodEntry::Bloop { .. } => ("bloop", "beta", Method::bloop(v), true),
                };
                Cell { label: param_label(family, pname, v), family, parameter: v, method, scale_penalty_step: scale }
            })
            .collect()
    }

    fn validate(&self, at: &str) -> Result<()> {
        if self.grid().is_empty() {
            return Err(HarnessError::config(at, "parameter grid is empty"));
        }
        for cell in self.cells() {
            match cell.method {
                Method::Dbgd(rule) => rule.validate().map_err(|e| HarnessError::config(at, e.to_string()))?,
                Method::Penalty { lambda } => {
                    if !(lambda >= 0.0 && lambda.is_finite()) {
                        return Err(HarnessError::config(at, format!("penalty λ must be finite and ≥ 0 (got {lambda})")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    Constant(f64),
    TheoremSchedule { p: f64 },
}

impl From<StepConfig> for StepMode {
    fn from(s: StepConfig) -> Self {
        match s {
            StepConfig::Constant(eta) => StepMode::Constant(eta),
            StepConfig::TheoremSchedule { p } => StepMode::TheoremSchedule { p },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    pub step: StepConfig,
    /// Explicit starting point; exclusive with `x0_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Seeded Gaussian start scaled by `x0_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopTolerances>,
}

/// Scale applied to seeded Gaussian starting points when none is given.
pub const DEFAULT_X0_SCALE: f64 = 0.1;

impl RunConfig {
    pub fn guard(&self) -> f64 {
        self.guard.unwrap_or(dbgd::DEFAULT_GUARD)
    }

    pub fn initial_point(&self, dim: usize) -> Result<Vec<f64>> {
        match (&self.x0, self.x0_seed) {
            (Some(_), Some(_)) => Err(HarnessError::config("run", "give either x0 or x0_seed, not both")),
            (Some(x0), None) => {
                if x0.len() != dim {
                    return Err(HarnessError::config(
                        "run.x0",
                        format!("has {} entries but the problem dimension is {dim}", x0.len()),
                    ));
                }
                Ok(x0.clone())
            }
            (None, Some(seed)) => Ok(gaussian_init(dim, self.x0_scale.unwrap_or(DEFAULT_X0_SCALE), seed)),
            (None, None) => Err(HarnessError::config("run", "missing x0 or x0_seed")),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(HarnessError::config("run.iterations", "must be ≥ 1"));
        }
        match self.step {
            StepConfig::Constant(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(HarnessError::config("run.step.constant", format!("must be > 0 (got {eta})")))
            }
            StepConfig::TheoremSchedule { p } if !(p >= 0.0 && p.is_finite()) => {
                return Err(HarnessError::config("run.step.theorem_schedule.p", format!("must be ≥ 0 (got {p})")))
            }
            _ => {}
        }
        if self.x0_scale.is_some() && self.x0_seed.is_none() {
            return Err(HarnessError::config("run.x0_scale", "only applies together with x0_seed"));
        }
        if let Some(g) = self.guard {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(HarnessError::config("run.guard", format!("must be finite and ≥ 0 (got {g})")));
            }
        }
        if let Some(s) = self.stop {
            if !(s.eps_f >= 0.0 && s.eps_g >= 0.0) {
                return Err(HarnessError::config("run.stop", "tolerances must be ≥ 0"));
            }
        }
        let x0 = self.initial_point(dim)?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::config("run.x0", "entries must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep every n-th trace row (the last row is always kept).
    #[serde(default = "one")]
    pub trace_every: usize,
    #[serde(default)]
    pub record_iterates: RecordIterates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn one() -> usize {
    1
}

impl OutputConfig {
    fn validate(&self) -> Result<()> {
        if self.trace_every == 0 {
            return Err(HarnessError::config("output.trace_every", "must be ≥ 1"));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::config("output.workers", "must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub problem: ProblemConfig,
    pub methods: Vec<MethodEntry>,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl GridConfig {
    pub fn cells(&self) -> Vec<Cell> {
        self.methods.iter().flat_map(MethodEntry::cells).collect()
    }

    pub fn validate(&self) -> Result<ProblemSpec> {
        let problem = self.problem.build()?;
        if self.methods.is_empty() {
            return Err(HarnessError::config("methods", "list is empty"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            m.validate(&format!("methods[{i}]"))?;
        }
        let mut labels: Vec<String> = self.cells().into_iter().map(|c| c.label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(HarnessError::config("methods", format!("duplicate cell '{}'", w[0])));
        }
        if matches!(self.run.step, StepConfig::TheoremSchedule { .. }) && problem.smoothness().is_none() {
            return Err(HarnessError::config("run.step", "theorem schedule needs a problem with smoothness constants"));
        }
        self.run.validate(problem.dim())?;
        self.output.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateProblem {
    pub problem: ProblemConfig,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub problems: Vec<RateProblem>,
    pub p: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub output: OutputConfig,
}

impl RatesConfig {
    pub fn validate(&self) -> Result<Vec<ProblemSpec>> {
        if self.problems.is_empty() {
            return Err(HarnessError::config("problems", "list is empty"));
        }
        if self.p.is_empty() {
            return Err(HarnessError::config("p", "list is empty"));
        }
        if let Some(p) = self.p.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(HarnessError::config("p", format!("entries must be ≥ 0 (got {p})")));
        }
        if self.k_grid.len() < 3 {
            return Err(HarnessError::config("k_grid", "needs at least 3 values"));
        }
        if self.k_grid.contains(&0) {
            return Err(HarnessError::config("k_grid", "entries must be ≥ 1"));
        }
        self.output.validate()?;
        self.problems
            .iter()
            .enumerate()
            .map(|(i, rp)| {
                let at = format!("problems[{i}]");
                let p = rp.problem.build()?;
                if p.smoothness().is_none() {
                    return Err(HarnessError::config(&at, "problem has no smoothness constants"));
                }
                if rp.x0.len() != p.dim() {
                    return Err(HarnessError::config(
                        &format!("{at}.x0"),
                        format!("has {} entries but the problem dimension is {}", rp.x0.len(), p.dim()),
                    ));
                }
                Ok(p)
            })
            .collect()
    }
}

/// Terminal-point classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseThresholds {
    /// Case I: final `λ` at most this...
    pub case1_lambda_max: f64,
    /// ...and final `‖∇f‖²` at most this.
    pub case1_grad_f_sq_max: f64,
    /// Case II: final `cos θ` at most this...
    pub case2_cos_max: f64,
    /// ...and final `λ` above this.
    pub case2_lambda_min: f64,
}

impl Default for CaseThresholds {
    fn default() -> Self {
        Self { case1_lambda_max: 0.1, case1_grad_f_sq_max: 1e-2, case2_cos_max: -0.99, case2_lambda_min: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub problem: ProblemConfig,
    pub method: MethodEntry,
    pub iterations: usize,
    pub step: StepConfig,
    pub initializations: Vec<Vec<f64>>,
    #[serde(default)]
    pub thresholds: CaseThresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    pub output: OutputConfig,
}

impl CaseStudyConfig {
    pub fn validate(&self) -> Result<(ProblemSpec, Cell)> {
        let problem = self.problem.build()?;
        self.method.validate("method")?;
        let mut cells = self.method.cells();
        if cells.len() != 1 {
            return Err(HarnessError::config("method", "case study takes exactly one parameter value"));
        }
        if self.initializations.is_empty() {
            return Err(HarnessError::config("initializations", "list is empty"));
        }
        let run = RunConfig {
            iterations: self.iterations,
            step: self.step,
            x0: None,
            x0_seed: None,
            x0_scale: None,
            guard: self.guard,
            stop: None,
        };
        for (i, x0) in self.initializations.iter().enumerate() {
            RunConfig { x0: Some(x0.clone()), ..run.clone() }
                .validate(problem.dim())
                .map_err(|e| e.relocate(&format!("initializations[{i}]")))?;
        }
        self.output.validate()?;
        Ok((problem, cells.remove(0)))
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Config::Grid(c) => c.validate().map(drop),
            Config::Rates(c) => c.validate().map(drop),
            Config::Casestudy(c) => c.validate().map(drop),
        }
    }

    pub fn output_mut(&mut self) -> &mut OutputConfig {
        match self {
            Config::Grid(c) => &mut c.output,
            Config::Rates(c) => &mut c.output,
            Config::Casestudy(c) => &mut c.output,
        }
    }
}
