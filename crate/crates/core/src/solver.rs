//! The discrete iteration `x_{k+1} = x_k − η d_k` and its trace.

use serde::{Deserialize, Serialize};

use crate::direction::{bloop_direction, dbgd_direction, penalty_direction, phi_value, DirectionResult, PhiRule};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, norm_sq};
use crate::metrics::{decomposition_norms, optimal_lambda};
use crate::problems::{ProblemSpec, SmoothnessProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Halfspace projection with the given barrier. `PhiRule::BloopOrthogonal`
    /// selects the equality-constrained BLOOP direction.
    Dbgd(PhiRule),
    /// Fixed multiplier `d = ∇f + λ∇g`.
    Penalty { lambda: f64 },
}

impl Method {
    pub fn bloop(beta: f64) -> Self {
        Method::Dbgd(PhiRule::BloopOrthogonal { beta })
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Dbgd(PhiRule::BloopOrthogonal { .. }) => MethodKind::Bloop,
            Method::Dbgd(_) => MethodKind::Dbgd,
            Method::Penalty { .. } => MethodKind::Penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Dbgd,
    Bloop,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Constant(f64),
    /// `η = 1/(L K^{1/(3+p)})`, `β = K^{−p/(3+p)}`.
    TheoremSchedule { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordIterates {
    None,
    #[default]
    Final,
    All,
}

/// Opt-in early stop: halt once `‖∇g‖² ≤ eps_g` and
/// `min_{λ≥0} ‖∇f + λ∇g‖² ≤ eps_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopTolerances {
    pub eps_f: f64,
    pub eps_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub step: StepMode,
    pub iterations: usize,
    /// Degeneracy guard on `‖∇g‖²`.
    pub guard: f64,
    /// Divide the penalty step by `1 + λ`.
    pub scale_penalty_step: bool,
    pub record: RecordIterates,
    pub stop: Option<StopTolerances>,
    /// Keep every `trace_stride`-th row (plus the last one).
    pub trace_stride: usize,
}

impl SolverConfig {
    pub fn new(method: Method, step: StepMode, iterations: usize) -> Self {
        Self {
            method,
            step,
            iterations,
            guard: crate::DEFAULT_GUARD,
            scale_penalty_step: true,
            record: RecordIterates::Final,
            stop: None,
            trace_stride: 1,
        }
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_record(mut self, record: RecordIterates) -> Self {
        self.record = record;
        self
    }

    pub fn with_stop(mut self, stop: StopTolerances) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn with_penalty_scaling(mut self, on: bool) -> Self {
        self.scale_penalty_step = on;
        self
    }

    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }
}

/// `η = 1/(L K^{1/(3+p)})` and `β = K^{−p/(3+p)}` with `L = L_f + L_g`.
pub fn theorem_schedule(profile: &SmoothnessProfile, iterations: usize, p: f64) -> (f64, f64) {
    let k = iterations as f64;
    let eta = 1.0 / (profile.l() * k.powf(1.0 / (3.0 + p)));
    let beta = k.powf(-p / (3.0 + p));
    (eta, beta)
}

/// How the potential column was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `½‖d‖² + β‖∇g‖²/(L_g η)`
    Barrier,
    /// `½‖d‖²` only (penalty runs, or no `β`/`L_g` available).
    HalfDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub method: MethodKind,
    /// The rule driving a DBGD/BLOOP run after schedule resolution.
    pub rule: Option<PhiRule>,
    /// Step actually taken (after penalty scaling).
    pub eta: f64,
    pub beta: Option<f64>,
    pub potential: PotentialKind,
}

/// One iteration's diagnostics, all evaluated at `x_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub f: f64,
    pub g: f64,
    pub grad_f_sq: f64,
    pub grad_g_sq: f64,
    pub lambda: f64,
    pub d_sq: f64,
    /// `None` when either gradient is at or below the guard.
    pub cos_theta: Option<f64>,
    pub f_perp_sq: f64,
    pub f_par_sq: f64,
    /// `f(x_k) − f(x_{k+1})`
    pub delta_f: f64,
    /// `g(x_k) − g(x_{k+1})`
    pub delta_g: f64,
    pub potential: f64,
    pub degenerate: bool,
}

/// Column-oriented trace; every column has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub meta: TraceMeta,
    pub k: Vec<usize>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub grad_f_sq: Vec<f64>,
    pub grad_g_sq: Vec<f64>,
    pub lambda: Vec<f64>,
    pub d_sq: Vec<f64>,
    pub cos_theta: Vec<Option<f64>>,
    pub f_perp_sq: Vec<f64>,
    pub f_par_sq: Vec<f64>,
    pub delta_f: Vec<f64>,
    pub delta_g: Vec<f64>,
    pub potential: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl TraceRecord {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            k: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
            grad_f_sq: Vec::new(),
            grad_g_sq: Vec::new(),
            lambda: Vec::new(),
            d_sq: Vec::new(),
            cos_theta: Vec::new(),
            f_perp_sq: Vec::new(),
            f_par_sq: Vec::new(),
            delta_f: Vec::new(),
            delta_g: Vec::new(),
            potential: Vec::new(),
            degenerate: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.k.push(row.k);
        self.f.push(row.f);
        self.g.push(row.g);
        self.grad_f_sq.push(row.grad_f_sq);
        self.grad_g_sq.push(row.grad_g_sq);
        self.lambda.push(row.lambda);
        self.d_sq.push(row.d_sq);
        self.cos_theta.push(row.cos_theta);
        self.f_perp_sq.push(row.f_perp_sq);
        self.f_par_sq.push(row.f_par_sq);
        self.delta_f.push(row.delta_f);
        self.delta_g.push(row.delta_g);
        self.potential.push(row.potential);
        self.degenerate.push(row.degenerate);
    }

    pub fn row(&self, i: usize) -> TraceRow {
        TraceRow {
            k: self.k[i],
            f: self.f[i],
            g: self.g[i],
            grad_f_sq: self.grad_f_sq[i],
            grad_g_sq: self.grad_g_sq[i],
            lambda: self.lambda[i],
            d_sq: self.d_sq[i],
            cos_theta: self.cos_theta[i],
            f_perp_sq: self.f_perp_sq[i],
            f_par_sq: self.f_par_sq[i],
            delta_f: self.delta_f[i],
            delta_g: self.delta_g[i],
            potential: self.potential[i],
            degenerate: self.degenerate[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = TraceRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    pub fn last(&self) -> Option<TraceRow> {
        self.len().checked_sub(1).map(|i| self.row(i))
    }
}

/// Row index minimizing the potential; ties go to the smallest index.
pub fn best_iterate(trace: &TraceRecord) -> Result<usize> {
    best_index(&trace.potential).ok_or_else(|| Error::Precondition("trace is empty".into()))
}

pub(crate) fn best_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Minimum-potential iterate over every iteration, including rows the trace
/// stride dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestIterate {
    pub k: usize,
    pub potential: f64,
    pub grad_g_sq: f64,
    pub d_sq: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TraceRecord,
    /// `x_K`, or the certified `x_k` after an early stop. `None` only with
    /// [`RecordIterates::None`].
    pub final_x: Option<Vec<f64>>,
    /// `x_0, …, x_K` with [`RecordIterates::All`].
    pub iterates: Option<Vec<Vec<f64>>>,
    pub best: BestIterate,
    pub eta: f64,
    pub beta: Option<f64>,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// Times `φ` was clamped at zero because `g < g*`.
    pub phi_clamps: usize,
    pub warnings: Vec<String>,
}

struct Resolved {
    method: Method,
    eta: f64,
    meta: TraceMeta,
    warnings: Vec<String>,
}

fn resolve(problem: &ProblemSpec, config: &SolverConfig) -> Result<Resolved> {
    if config.iterations == 0 {
        return Err(Error::Config("iteration budget K must be ≥ 1".into()));
    }
    if !(config.guard >= 0.0) || !config.guard.is_finite() {
        return Err(Error::Config(format!("guard must be finite and ≥ 0 (got {})", config.guard)));
    }
    if config.trace_stride == 0 {
        return Err(Error::Config("trace stride must be ≥ 1".into()));
    }
    if let Some(stop) = config.stop {
        if !(stop.eps_f >= 0.0 && stop.eps_g >= 0.0) {
            return Err(Error::Config("stop tolerances must be ≥ 0".into()));
        }
    }
    let profile = problem.smoothness();
    let mut warnings = Vec::new();

    let mut method = config.method;
    if let Method::Dbgd(rule) = method {
        rule.validate()?;
        method = Method::Dbgd(rule.resolve_g_star(problem.lower_optimum())?);
    }
    if let Method::Penalty { lambda } = method {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("penalty λ must be finite and ≥ 0 (got {lambda})")));
        }
    }

    let base_eta = match config.step {
        StepMode::Constant(eta) => {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::Config(format!("step size must be > 0 (got {eta})")));
            }
            if let (Method::Dbgd(_), Some(prof)) = (method, profile) {
                if eta > 1.0 / prof.l() {
                    warnings.push(format!(
                        "step size {eta} exceeds 1/(L_f+L_g) = {}; descent inequalities may not hold",
                        1.0 / prof.l()
                    ));
                }
            }
            eta
        }
        StepMode::TheoremSchedule { p } => {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Config(format!("schedule exponent p must be ≥ 0 (got {p})")));
            }
            let prof = profile.ok_or_else(|| {
                Error::Config(format!("theorem schedule needs a smoothness profile; '{}' has none", problem.name()))
            })?;
            let (eta, beta) = theorem_schedule(&prof, config.iterations, p);
            if let Method::Dbgd(rule) = method {
                method = Method::Dbgd(rule.with_beta(beta));
            }
            eta
        }
    };

    let eta = match method {
        Method::Penalty { lambda } if config.scale_penalty_step => base_eta / (1.0 + lambda),
        _ => base_eta,
    };

    let (rule, beta) = match method {
        Method::Dbgd(rule) => (Some(rule), rule.beta()),
        Method::Penalty { .. } => (None, None),
    };
    let potential = match (beta, profile) {
        (Some(_), Some(_)) => PotentialKind::Barrier,
        (Some(_), None) => {
            warnings.push("no smoothness profile: potential column records ½‖d‖² only".into());
            PotentialKind::HalfDirection
        }
        _ => PotentialKind::HalfDirection,
    };

    Ok(Resolved {
        method,
        eta,
        meta: TraceMeta { method: method.kind(), rule, eta, beta, potential },
        warnings,
    })
}

fn direction_for(
    method: &Method,
    g_val: f64,
    grad_f: &[f64],
    grad_g: &[f64],
    guard: f64,
    clamps: &mut usize,
) -> Result<DirectionResult> {
    Ok(match method {
        Method::Dbgd(PhiRule::BloopOrthogonal { beta }) => bloop_direction(grad_f, grad_g, *beta, guard),
        Method::Dbgd(rule) => {
            let phi = phi_value(rule, g_val, grad_g)?;
            *clamps += phi.clamped as usize;
            dbgd_direction(grad_f, grad_g, phi.value, guard)
        }
        Method::Penalty { lambda } => penalty_direction(grad_f, grad_g, *lambda),
    })
}

/// The method's direction at an arbitrary point, e.g. at `x_K` after a run.
/// Pass the rule from [`TraceMeta::rule`] to reuse a schedule-resolved `β`.
pub fn direction_at(problem: &ProblemSpec, method: &Method, x: &[f64], guard: f64) -> Result<DirectionResult> {
    problem.check_dim(x)?;
    let method = match method {
        Method::Dbgd(rule) => Method::Dbgd(rule.resolve_g_star(problem.lower_optimum())?),
        m => *m,
    };
    let grad_f = problem.upper_grad_vec(x);
    let grad_g = problem.lower_grad_vec(x);
    if !all_finite(&grad_f) || !all_finite(&grad_g) {
        return Err(Error::Evaluation("non-finite gradient".into()));
    }
    direction_for(&method, problem.lower(x), &grad_f, &grad_g, guard, &mut 0)
}

/// Runs the configured method from `x0` for up to `K` iterations.
pub fn run(problem: &ProblemSpec, config: &SolverConfig, x0: &[f64]) -> Result<RunOutput> {
    problem.check_dim(x0)?;
    if !all_finite(x0) {
        return Err(Error::Config("initial point has non-finite entries".into()));
    }
    let Resolved { method, eta, meta, warnings } = resolve(problem, config)?;
    let lg = problem.smoothness().map(|p| p.lg);
    let potential_weight = match (meta.potential, meta.beta, lg) {
        (PotentialKind::Barrier, Some(beta), Some(lg)) => beta / (lg * eta),
        _ => 0.0,
    };

    let n = problem.dim();
    let k_max = config.iterations;
    let mut x = x0.to_vec();
    let mut x_next = vec![0.0; n];
    let mut grad_f = vec![0.0; n];
    let mut grad_g = vec![0.0; n];
    let mut f_val = problem.upper(&x);
    let mut g_val = problem.lower(&x);

    let mut trace = TraceRecord::new(meta);
    let mut iterates = matches!(config.record, RecordIterates::All).then(|| vec![x.clone()]);
    let mut best: Option<BestIterate> = None;
    let mut clamps = 0usize;
    let mut stopped_early = false;
    let mut iterations_run = 0;

    for k in 0..k_max {
        let diverged = |quantity| Error::Divergence { iteration: k, quantity };
        problem.upper_grad(&x, &mut grad_f);
        problem.lower_grad(&x, &mut grad_g);
        if !f_val.is_finite() {
            return Err(diverged("f"));
        }
        if !g_val.is_finite() {
            return Err(diverged("g"));
        }
        if !all_finite(&grad_f) {
            return Err(diverged("∇f"));
        }
        if !all_finite(&grad_g) {
            return Err(diverged("∇g"));
        }

        let dir = direction_for(&method, g_val, &grad_f, &grad_g, config.guard, &mut clamps)?;
        let d_sq = norm_sq(&dir.d);
        if !d_sq.is_finite() || !dir.lambda.is_finite() {
            return Err(diverged("d"));
        }
        let dec = decomposition_norms(&grad_f, &grad_g, config.guard);

        let stop_here = config.stop.is_some_and(|s| {
            dec.grad_g_sq <= s.eps_g && optimal_lambda(&grad_f, &grad_g, config.guard).1 <= s.eps_f
        });

        x_next.copy_from_slice(&x);
        axpy(-eta, &dir.d, &mut x_next);
        let f_next = problem.upper(&x_next);
        let g_next = problem.lower(&x_next);
        if !f_next.is_finite() || !g_next.is_finite() || !all_finite(&x_next) {
            return Err(Error::Divergence { iteration: k + 1, quantity: "next iterate" });
        }

        let potential = 0.5 * d_sq + potential_weight * dec.grad_g_sq;
        let row = TraceRow {
            k,
            f: f_val,
            g: g_val,
            grad_f_sq: dec.grad_f_sq,
            grad_g_sq: dec.grad_g_sq,
            lambda: dir.lambda,
            d_sq,
            cos_theta: dec.cos_theta,
            f_perp_sq: dec.perp_sq,
            f_par_sq: dec.par_sq,
            delta_f: f_val - f_next,
            delta_g: g_val - g_next,
            potential,
            degenerate: dir.degenerate,
        };
        if best.is_none_or(|b| potential < b.potential) {
            best = Some(BestIterate { k, potential, grad_g_sq: dec.grad_g_sq, d_sq, lambda: dir.lambda });
        }
        iterations_run = k + 1;
        if k % config.trace_stride == 0 || k + 1 == k_max || stop_here {
            trace.push(row);
        }
        if stop_here {
            stopped_early = true;
            break;
        }

        std::mem::swap(&mut x, &mut x_next);
        f_val = f_next;
        g_val = g_next;
        if let Some(its) = iterates.as_mut() {
            its.push(x.clone());
        }
    }

    Ok(RunOutput {
        trace,
        final_x: (!matches!(config.record, RecordIterates::None)).then_some(x),
        iterates,
        best: best.expect("K ≥ 1 guarantees one iteration"),
        eta,
        beta: meta.beta,
        iterations_run,
        stopped_early,
        phi_clamps: clamps,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_sanity_problem, toy_problem};

    fn meta() -> TraceMeta {
        TraceMeta { method: MethodKind::Dbgd, rule: None, eta: 1.0, beta: None, potential: PotentialKind::HalfDirection }
    }

    fn trace_with_potential(g: &[f64]) -> TraceRecord {
        let mut t = TraceRecord::new(meta());
        for (k, &p) in g.iter().enumerate() {
            t.push(TraceRow {
                k,
                f: 0.0,
                g: 0.0,
                grad_f_sq: 0.0,
                grad_g_sq: 0.0,
                lambda: 0.0,
                d_sq: 0.0,
                cos_theta: None,
                f_perp_sq: 0.0,
                f_par_sq: 0.0,
                delta_f: 0.0,
                delta_g: 0.0,
                potential: p,
                degenerate: false,
            });
        }
        t
    }

    #[test]
    fn best_iterate_examples() {
        assert_eq!(best_iterate(&trace_with_potential(&[3.0, 1.0, 2.0])).unwrap(), 1);
        assert_eq!(best_iterate(&trace_with_potential(&[1.0, 1.0])).unwrap(), 0);
        assert_eq!(best_iterate(&trace_with_potential(&[5.0, 4.0, 3.0, 0.5])).unwrap(), 3);
        assert!(best_iterate(&trace_with_potential(&[])).is_err());
    }

    #[test]
    fn schedule_examples() {
        let p2 = SmoothnessProfile { grad_bound: None, lf: 1.0, lg: 1.0 };
        assert_eq!(theorem_schedule(&p2, 1, 0.7), (0.5, 1.0));
        let p1 = SmoothnessProfile { grad_bound: None, lf: 0.5, lg: 0.5 };
        let (eta, beta) = theorem_schedule(&p1, 10_000, 1.0);
        assert!((eta - 0.1).abs() < 1e-15 && (beta - 0.1).abs() < 1e-15);
        let (eta, beta) = theorem_schedule(&p2, 1000, 0.0);
        assert_eq!(beta, 1.0);
        assert!((eta - 1.0 / (2.0 * 10.0)).abs() < 1e-15);
    }

    #[test]
    fn penalty_zero_is_gradient_descent_on_f() {
        let p = quadratic_sanity_problem(3).unwrap();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 0.0 }, StepMode::Constant(0.5), 200);
        let out = run(&p, &cfg, &[-2.0, 0.3, 4.0]).unwrap();
        for v in out.final_x.unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_step_scaling() {
        let p = quadratic_sanity_problem(2).unwrap();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 9.0 }, StepMode::Constant(0.5), 3);
        assert_eq!(run(&p, &cfg, &[1.0, 1.0]).unwrap().eta, 0.05);
        let cfg = cfg.with_penalty_scaling(false);
        assert_eq!(run(&p, &cfg, &[1.0, 1.0]).unwrap().eta, 0.5);
    }

    #[test]
    fn trace_columns_share_length() {
        let p = toy_problem();
        let cfg = SolverConfig::new(Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }), StepMode::Constant(1e-3), 57);
        let out = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
        let t = &out.trace;
        assert_eq!(t.len(), 57);
        for len in [t.f.len(), t.g.len(), t.lambda.len(), t.cos_theta.len(), t.potential.len(), t.degenerate.len()] {
            assert_eq!(len, 57);
        }
        assert!(t.potential.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn trace_stride_keeps_last_row() {
        let p = toy_problem();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 1.0 }, StepMode::Constant(1e-3), 25).with_trace_stride(10);
        let out = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
        assert_eq!(out.trace.k, vec![0, 10, 20, 24]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = toy_problem();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 1.0 }, StepMode::Constant(1e-3), 5);
        assert!(matches!(run(&p, &cfg, &[0.0, 0.0, 0.0]), Err(Error::Config(_))));
        assert!(matches!(run(&p, &cfg, &[f64::NAN, 0.0]), Err(Error::Config(_))));
        let cfg = SolverConfig::new(Method::Penalty { lambda: 1.0 }, StepMode::Constant(1e-3), 0);
        assert!(matches!(run(&p, &cfg, &[0.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_names_iteration() {
        let p = quadratic_sanity_problem(2).unwrap();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 0.0 }, StepMode::Constant(1e154), 50);
        match run(&p, &cfg, &[3.0, 3.0]) {
            Err(Error::Divergence { iteration, .. }) => assert!((1..50).contains(&iteration)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn large_constant_step_warns() {
        let p = quadratic_sanity_problem(2).unwrap();
        let cfg = SolverConfig::new(Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }), StepMode::Constant(0.9), 3);
        assert_eq!(run(&p, &cfg, &[0.5, 0.5]).unwrap().warnings.len(), 1);
        let cfg = SolverConfig::new(Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }), StepMode::Constant(0.5), 3);
        assert!(run(&p, &cfg, &[0.5, 0.5]).unwrap().warnings.is_empty());
    }

    #[test]
    fn g_star_rules_need_a_g_star() {
        use crate::problems::{matrix_factorization_problem, SparsityPenalty};
        let p = matrix_factorization_problem(3, 2, 1.0, SparsityPenalty::SmoothL1, 0.1, 0).unwrap();
        let rule = PhiRule::DynamicBarrierMin { alpha: 1.0, beta: 1.0, g_star: None };
        let cfg = SolverConfig::new(Method::Dbgd(rule), StepMode::Constant(1e-4), 3);
        assert!(matches!(run(&p, &cfg, &[0.1; 6]), Err(Error::Config(_))));
        let toy = toy_problem();
        assert!(run(&toy, &cfg, &[0.1, 0.2]).is_ok());
    }

    #[test]
    fn early_stop_certifies_last_row() {
        let p = quadratic_sanity_problem(2).unwrap();
        let stop = StopTolerances { eps_f: 1e-2, eps_g: 1e-6 };
        let cfg = SolverConfig::new(Method::Penalty { lambda: 0.0 }, StepMode::Constant(0.5), 1000)
            .with_stop(stop)
            .with_penalty_scaling(false);
        // GD on f heads to 1, so ∇g never gets small: no early stop.
        let out = run(&p, &cfg, &[0.2, 0.2]).unwrap();
        assert!(!out.stopped_early);

        let cfg = SolverConfig::new(Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }), StepMode::Constant(0.5), 1000)
            .with_stop(stop);
        let out = run(&p, &cfg, &[0.5, 0.5]).unwrap();
        assert!(out.stopped_early);
        let last = out.trace.last().unwrap();
        assert!(last.grad_g_sq <= stop.eps_g);
        let x = out.final_x.unwrap();
        let rep = crate::metrics::stationarity_report_optimal(&p, &x).unwrap();
        assert!(rep.grad_g_sq <= stop.eps_g && rep.d_sq <= stop.eps_f);
    }

    #[test]
    fn record_all_iterates() {
        let p = quadratic_sanity_problem(2).unwrap();
        let cfg = SolverConfig::new(Method::Penalty { lambda: 1.0 }, StepMode::Constant(0.1), 4).with_record(RecordIterates::All);
        let out = run(&p, &cfg, &[0.0, 0.0]).unwrap();
        let its = out.iterates.unwrap();
        assert_eq!(its.len(), 5);
        assert_eq!(its.last().unwrap(), out.final_x.as_ref().unwrap());
        let cfg = cfg.with_record(RecordIterates::None);
        assert!(run(&p, &cfg, &[0.0, 0.0]).unwrap().final_x.is_none());
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let p = toy_problem();
        let cfg = SolverConfig::new(Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }), StepMode::Constant(1e-2), 400);
        let a = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
        let b = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
        assert_eq!(a.trace, b.trace);
    }
}
