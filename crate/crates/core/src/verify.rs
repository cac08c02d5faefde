//! Numerical oracles and property checks for the descent inequalities and
//! the convergence rate.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::direction::PhiRule;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};
use crate::problems::{ProblemSpec, SmoothnessProfile};
use crate::rng::{seeded, uniform_in_ball};
use crate::solver::{run, Method, MethodKind, SolverConfig, StepMode, TraceRecord};

/// Default central-difference step at `x`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-6 * (1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Worst per-coordinate error `|fd − analytic| / (1 + ‖analytic‖∞)` of central
/// differences against both analytic gradients.
pub fn finite_diff_check(problem: &ProblemSpec, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Precondition(format!("finite-difference step must be > 0 (got {h})")));
    }
    problem.check_dim(x)?;
    let analytic = [problem.upper_grad_vec(x), problem.lower_grad_vec(x)];
    if !analytic.iter().all(|g| all_finite(g)) {
        return Err(Error::Evaluation(format!("non-finite analytic gradient at {x:?}")));
    }
    let mut xp = x.to_vec();
    let mut worst = 0.0_f64;
    for (which, grad) in analytic.iter().enumerate() {
        let eval = |y: &[f64]| if which == 0 { problem.upper(y) } else { problem.lower(y) };
        let scale = 1.0 + grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let plus = eval(&xp);
            xp[i] = x[i] - h;
            let minus = eval(&xp);
            xp[i] = x[i];
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Evaluation(format!("non-finite objective near {x:?}")));
            }
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    Ok(worst)
}

/// `(x ≤ A + B√x) ⇒ (x ≤ 2A + B²)`.
pub fn sqrt_lemma_check(a: f64, b: f64, x: f64) -> bool {
    let premise = x <= a + b * x.sqrt();
    !premise || x <= 2.0 * a + b * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SqrtLemmaSearch {
    pub samples: usize,
    pub premise_held: usize,
    pub violations: usize,
}

/// Draws `A ∈ [−5, 5]`, `B ∈ [0, 5]` and `x` below the largest root of
/// `x = A + B√x`, then counts conclusion failures among samples whose premise
/// holds in floating point.
pub fn sqrt_lemma_search(samples: usize, seed: u64) -> SqrtLemmaSearch {
    let mut rng = seeded(seed);
    let mut out = SqrtLemmaSearch { samples, premise_held: 0, violations: 0 };
    let mut drawn = 0;
    while drawn < samples {
        let a: f64 = rng.random_range(-5.0..5.0);
        let b: f64 = rng.random_range(0.0..5.0);
        let disc = b * b + 4.0 * a;
        if disc < 0.0 {
            continue;
        }
        drawn += 1;
        let root = 0.5 * (b + disc.sqrt());
        let x = rng.random::<f64>() * root * root;
        if x <= a + b * x.sqrt() {
            out.premise_held += 1;
            if !sqrt_lemma_check(a, b, x) {
                out.violations += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub k: usize,
    /// `(1 − ηL_f/2)‖d‖² ≤ Δf/η + λβ‖∇g‖²`
    pub descent_f: bool,
    /// `β‖∇g‖² ≤ Δg/η + (L_g/2)η‖d‖²`
    pub descent_g: bool,
    /// `λ ≤ β + G_f/‖∇g‖`
    pub lambda_bound: bool,
    /// `‖d‖² ≤ 4(Δf+βΔg)/η + 2Δg/(L_g η²) + 2βG_f²L_g η`
    pub direction_bound: bool,
    /// `½‖d‖² + β‖∇g‖²/(L_g η) ≤ 4(Δf+βΔg)/η + 3Δg/(L_g η²) + 2βG_f²L_g η`
    pub potential_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub descent_f_violations: usize,
    pub descent_g_violations: usize,
    pub lambda_bound_violations: usize,
    pub direction_bound_violations: usize,
    pub potential_bound_violations: usize,
}

impl AuditReport {
    pub fn total_violations(&self) -> usize {
        self.descent_f_violations
            + self.descent_g_violations
            + self.lambda_bound_violations
            + self.direction_bound_violations
            + self.potential_bound_violations
    }
}

/// `lhs ≤ rhs` up to `1e-8 (1 + magnitude)`, with the magnitude taken over
/// every term involved.
fn holds(lhs: f64, rhs_terms: &[f64]) -> bool {
    let rhs: f64 = rhs_terms.iter().sum();
    let magnitude = rhs_terms.iter().fold(lhs.abs(), |m, t| m.max(t.abs()));
    lhs <= rhs + 1e-8 * (1.0 + magnitude)
}

/// Checks the per-iteration descent inequalities on a trace from a DBGD run
/// with `φ = β‖∇g‖²`, against the supplied constants.
pub fn inequality_audit(trace: &TraceRecord, profile: &SmoothnessProfile, eta: f64, beta: f64) -> Result<AuditReport> {
    if trace.meta.method != MethodKind::Dbgd || !matches!(trace.meta.rule, Some(PhiRule::GradNormSquared { .. })) {
        return Err(Error::Config("inequality audit needs a DBGD trace with φ = β‖∇g‖²".into()));
    }
    let gf = profile
        .grad_bound
        .ok_or_else(|| Error::Config("inequality audit needs a bound on ‖∇f‖".into()))?;
    if !(eta > 0.0) || !(beta >= 0.0) {
        return Err(Error::Config(format!("audit needs η > 0 and β ≥ 0 (got η={eta}, β={beta})")));
    }
    let (lf, lg) = (profile.lf, profile.lg);
    let mut report = AuditReport {
        rows: Vec::with_capacity(trace.len()),
        descent_f_violations: 0,
        descent_g_violations: 0,
        lambda_bound_violations: 0,
        direction_bound_violations: 0,
        potential_bound_violations: 0,
    };
    for r in trace.rows() {
        let gsq = r.grad_g_sq;
        let descent_f = holds((1.0 - eta * lf / 2.0) * r.d_sq, &[r.delta_f / eta, r.lambda * beta * gsq]);
        let descent_g = holds(beta * gsq, &[r.delta_g / eta, 0.5 * lg * eta * r.d_sq]);
        let lambda_bound = gsq == 0.0 || holds(r.lambda, &[beta, gf / gsq.sqrt()]);
        let direction_bound = holds(
            r.d_sq,
            &[
                4.0 * r.delta_f / eta,
                4.0 * beta * r.delta_g / eta,
                2.0 * r.delta_g / (lg * eta * eta),
                2.0 * beta * gf * gf * lg * eta,
            ],
        );
        let potential_bound = holds(
            0.5 * r.d_sq + beta * gsq / (lg * eta),
            &[
                4.0 * r.delta_f / eta,
                4.0 * beta * r.delta_g / eta,
                3.0 * r.delta_g / (lg * eta * eta),
                2.0 * beta * gf * gf * lg * eta,
            ],
        );
        report.descent_f_violations += !descent_f as usize;
        report.descent_g_violations += !descent_g as usize;
        report.lambda_bound_violations += !lambda_bound as usize;
        report.direction_bound_violations += !direction_bound as usize;
        report.potential_bound_violations += !potential_bound as usize;
        report.rows.push(AuditRow { k: r.k, descent_f, descent_g, lambda_bound, direction_bound, potential_bound });
    }
    Ok(report)
}

/// Radius `min{2δ√ε_g/L_g, 2δ√ε_f/(λL_g + L_f)}` under which the local
/// optimality conditions are guaranteed for an `(ε_f, ε_g)`-stationary point.
pub fn lemma_radius(eps_f: f64, eps_g: f64, lambda: f64, delta: f64, profile: &SmoothnessProfile) -> f64 {
    let r_g = 2.0 * delta * eps_g.sqrt() / profile.lg;
    let r_f = 2.0 * delta * eps_f.sqrt() / (lambda * profile.lg + profile.lf);
    r_g.min(r_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalCertificate {
    pub passed: bool,
    /// Largest `g(x̂) − (1+δ)√ε_g‖x−x̂‖ − g(x)`; positive means a violation.
    pub worst_margin_lower: f64,
    /// Largest `f(x̂) − (1+δ)√ε_f‖x−x̂‖ − f(x)` over samples with `g(x) ≤ g(x̂)`.
    pub worst_margin_upper: Option<f64>,
    pub samples: usize,
    pub lower_sublevel_samples: usize,
}

/// Samples the ball around `x̂` and checks both local optimality conditions.
#[allow(clippy::too_many_arguments)]
pub fn local_certificate(
    problem: &ProblemSpec,
    x_hat: &[f64],
    eps_f: f64,
    eps_g: f64,
    delta: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<LocalCertificate> {
    if !(radius > 0.0) || samples == 0 {
        return Err(Error::Precondition(format!("need radius > 0 and samples ≥ 1 (got {radius}, {samples})")));
    }
    problem.check_dim(x_hat)?;
    let (f0, g0) = (problem.upper(x_hat), problem.lower(x_hat));
    let (cf, cg) = ((1.0 + delta) * eps_f.sqrt(), (1.0 + delta) * eps_g.sqrt());
    let mut rng = seeded(seed);
    let mut worst_lower = f64::NEG_INFINITY;
    let mut worst_upper: Option<f64> = None;
    let mut sub = 0;
    for _ in 0..samples {
        let x = uniform_in_ball(&mut rng, x_hat, radius);
        let dist = norm(&crate::linalg::sub(&x, x_hat));
        let g = problem.lower(&x);
        worst_lower = worst_lower.max(g0 - cg * dist - g);
        if g <= g0 {
            sub += 1;
            let m = f0 - cf * dist - problem.upper(&x);
            worst_upper = Some(worst_upper.map_or(m, |w| w.max(m)));
        }
    }
    Ok(LocalCertificate {
        passed: worst_lower <= 0.0 && worst_upper.is_none_or(|m| m <= 0.0),
        worst_margin_lower: worst_lower,
        worst_margin_upper: worst_upper,
        samples,
        lower_sublevel_samples: sub,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub p: f64,
    pub k_values: Vec<usize>,
    pub min_potential: Vec<f64>,
    pub slope: f64,
    pub theoretical_slope: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const RATE_SLOPE_TOLERANCE: f64 = 0.3;

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs DBGD under the theorem schedule for every `K` and fits the decay of
/// `min_k G_k`.
pub fn rate_fit(problem: &ProblemSpec, x0: &[f64], p: f64, k_grid: &[usize]) -> Result<RateFit> {
    if k_grid.len() < 3 {
        return Err(Error::Precondition(format!("rate fit needs at least 3 values of K (got {})", k_grid.len())));
    }
    if problem.smoothness().is_none() {
        return Err(Error::Precondition(format!("'{}' has no smoothness profile", problem.name())));
    }
    let method = Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 });
    let min_potential = k_grid
        .par_iter()
        .map(|&k| {
            let cfg = SolverConfig::new(method, StepMode::TheoremSchedule { p }, k).with_trace_stride(k.max(1));
            run(problem, &cfg, x0).map(|out| out.best.potential)
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = min_potential.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Evaluation(format!("minimum potential {bad} is not positive")));
    }
    let ks: Vec<f64> = k_grid.iter().map(|&k| k as f64).collect();
    let slope = log_log_slope(&ks, &min_potential);
    let theoretical_slope = -(2.0 + p) / (3.0 + p);
    Ok(RateFit {
        p,
        k_values: k_grid.to_vec(),
        min_potential,
        slope,
        theoretical_slope,
        tolerance: RATE_SLOPE_TOLERANCE,
        passed: slope <= theoretical_slope + RATE_SLOPE_TOLERANCE,
    })
}
