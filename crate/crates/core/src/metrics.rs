//! Stationarity certificates at a candidate point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, norm_sq};
use crate::problems::ProblemSpec;
use crate::DEFAULT_GUARD;

/// Splits `∇f` into the part along `∇g` and the part orthogonal to it.
/// With `‖∇g‖² ≤ guard` the parallel part is zero.
pub fn decompose_grad_f(grad_f: &[f64], grad_g: &[f64], guard: f64) -> (Vec<f64>, Vec<f64>) {
    let gg = norm_sq(grad_g);
    if gg <= guard {
        return (vec![0.0; grad_f.len()], grad_f.to_vec());
    }
    let c = dot(grad_f, grad_g) / gg;
    let parallel: Vec<f64> = grad_g.iter().map(|g| c * g).collect();
    let perp = grad_f.iter().zip(&parallel).map(|(f, p)| f - p).collect();
    (parallel, perp)
}

/// Squared norms of the decomposition plus `cos θ`, without allocating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub grad_f_sq: f64,
    pub grad_g_sq: f64,
    pub par_sq: f64,
    pub perp_sq: f64,
    pub cos_theta: Option<f64>,
}

pub fn decomposition_norms(grad_f: &[f64], grad_g: &[f64], guard: f64) -> Decomposition {
    let ff = norm_sq(grad_f);
    let gg = norm_sq(grad_g);
    let fg = dot(grad_f, grad_g);
    if gg <= guard {
        return Decomposition { grad_f_sq: ff, grad_g_sq: gg, par_sq: 0.0, perp_sq: ff, cos_theta: None };
    }
    let c = fg / gg;
    // The orthogonal part is summed directly; ‖∇f‖² − par_sq cancels badly
    // when the gradients are nearly aligned.
    let perp_sq = grad_f.iter().zip(grad_g).map(|(f, g)| (f - c * g).powi(2)).sum();
    let cos_theta = (ff > guard).then(|| (fg / (ff.sqrt() * gg.sqrt())).clamp(-1.0, 1.0));
    Decomposition { grad_f_sq: ff, grad_g_sq: gg, par_sq: c * c * gg, perp_sq, cos_theta }
}

/// `λ ≥ 0` minimizing `‖∇f + λ∇g‖`, and that minimum squared.
pub fn optimal_lambda(grad_f: &[f64], grad_g: &[f64], guard: f64) -> (f64, f64) {
    let gg = norm_sq(grad_g);
    let lambda = if gg <= guard { 0.0 } else { (-dot(grad_f, grad_g) / gg).max(0.0) };
    let d_sq = grad_f.iter().zip(grad_g).map(|(f, g)| (f + lambda * g).powi(2)).sum();
    (lambda, d_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    /// Passed in by the caller, usually the solver's `λ_k`.
    Supplied,
    /// `max{−∇f·∇g/‖∇g‖², 0}`
    ReportOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    pub f: f64,
    pub g: f64,
    pub grad_f_sq: f64,
    pub grad_g_sq: f64,
    pub lambda: f64,
    pub lambda_source: LambdaSource,
    /// `‖∇f + λ∇g‖²`
    pub d_sq: f64,
    pub f_par_sq: f64,
    pub f_perp_sq: f64,
    pub cos_theta: Option<f64>,
    pub primal_gap: Option<f64>,
}

impl StationarityReport {
    /// `‖∇g‖² ≤ eps_g` and `‖∇f + λ∇g‖² ≤ eps_f` with this report's `λ`.
    pub fn is_stationary(&self, eps_f: f64, eps_g: f64) -> bool {
        self.grad_g_sq <= eps_g && self.d_sq <= eps_f
    }
}

fn gradients(problem: &ProblemSpec, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    problem.check_dim(x)?;
    let gf = problem.upper_grad_vec(x);
    let gg = problem.lower_grad_vec(x);
    if !all_finite(&gf) {
        return Err(Error::Evaluation("∇f is not finite".into()));
    }
    if !all_finite(&gg) {
        return Err(Error::Evaluation("∇g is not finite".into()));
    }
    Ok((gf, gg))
}

fn build_report(
    problem: &ProblemSpec,
    x: &[f64],
    gf: &[f64],
    gg: &[f64],
    lambda: f64,
    lambda_source: LambdaSource,
) -> StationarityReport {
    let dec = decomposition_norms(gf, gg, DEFAULT_GUARD);
    let d_sq = gf.iter().zip(gg).map(|(f, g)| (f + lambda * g).powi(2)).sum();
    let g = problem.lower(x);
    StationarityReport {
        f: problem.upper(x),
        g,
        grad_f_sq: dec.grad_f_sq,
        grad_g_sq: dec.grad_g_sq,
        lambda,
        lambda_source,
        d_sq,
        f_par_sq: dec.par_sq,
        f_perp_sq: dec.perp_sq,
        cos_theta: dec.cos_theta,
        primal_gap: problem.lower_optimum().map(|gs| g - gs),
    }
}

/// Report at `x` with a caller-chosen `λ ≥ 0`.
pub fn stationarity_report(problem: &ProblemSpec, x: &[f64], lambda: f64) -> Result<StationarityReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Precondition(format!("certificate multiplier must be finite and ≥ 0 (got {lambda})")));
    }
    let (gf, gg) = gradients(problem, x)?;
    Ok(build_report(problem, x, &gf, &gg, lambda, LambdaSource::Supplied))
}

/// Report at `x` with the `λ` that minimizes `‖∇f + λ∇g‖`.
pub fn stationarity_report_optimal(problem: &ProblemSpec, x: &[f64]) -> Result<StationarityReport> {
    let (gf, gg) = gradients(problem, x)?;
    let (lambda, _) = optimal_lambda(&gf, &gg, DEFAULT_GUARD);
    Ok(build_report(problem, x, &gf, &gg, lambda, LambdaSource::ReportOptimal))
}

/// Which of the three KKT-type conditions hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KktConditions {
    /// `g − g* ≤ ε_p` and `‖∇f + λ∇g‖ ≤ ε_d (1 + λ)`
    pub scaled: bool,
    /// `g − g* ≥ 0.99 ε_p` and `‖∇g‖ ≤ ε_d`
    pub infeasible_stationary: bool,
    /// `g − g* ≤ ε_p` and `‖∇f + λ∇g‖ ≤ ε_d`
    pub unscaled: bool,
}

/// Evaluates the conditions from scalar residuals alone.
pub fn kkt_conditions(primal_gap: f64, grad_g_norm: f64, d_norm: f64, lambda: f64, eps_p: f64, eps_d: f64) -> KktConditions {
    let feasible = primal_gap <= eps_p;
    KktConditions {
        scaled: feasible && d_norm <= eps_d * (1.0 + lambda),
        infeasible_stationary: primal_gap >= 0.99 * eps_p && grad_g_norm <= eps_d,
        unscaled: feasible && d_norm <= eps_d,
    }
}

/// Least-squares solution of `min_w ‖∇f + ∇²g w‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReformResidual {
    pub residual_sq: f64,
    pub w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// CGLS on the (symmetric) lower Hessian, stopping once the normal-equation
/// residual `‖H(∇f + Hw)‖` is at most `ls_tol`.
pub fn grad_reform_residual(problem: &ProblemSpec, x: &[f64], ls_tol: f64) -> Result<GradReformResidual> {
    if !problem.has_lower_hvp() {
        return Err(Error::Capability("lower_hvp"));
    }
    if !(ls_tol > 0.0) {
        return Err(Error::Precondition(format!("ls_tol must be > 0 (got {ls_tol})")));
    }
    let (gf, _) = gradients(problem, x)?;
    let n = gf.len();
    let max_iter = 20 * n + 100;

    let mut w = vec![0.0; n];
    // r = −∇f − Hw
    let mut r: Vec<f64> = gf.iter().map(|v| -v).collect();
    let mut s = vec![0.0; n];
    problem.lower_hvp(x, &r, &mut s)?;
    let mut p = s.clone();
    let mut q = vec![0.0; n];
    let mut gamma = norm_sq(&s);
    let mut iterations = 0;
    let mut converged = gamma.sqrt() <= ls_tol;

    while !converged && iterations < max_iter {
        problem.lower_hvp(x, &p, &mut q)?;
        let qq = norm_sq(&q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        axpy(alpha, &p, &mut w);
        axpy(-alpha, &q, &mut r);
        problem.lower_hvp(x, &r, &mut s)?;
        let gamma_next = norm_sq(&s);
        iterations += 1;
        if !gamma_next.is_finite() {
            return Err(Error::Evaluation("least-squares iteration produced a non-finite residual".into()));
        }
        converged = gamma_next.sqrt() <= ls_tol;
        let ratio = gamma_next / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + ratio * *pi;
        }
        gamma = gamma_next;
    }

    // Fresh residual; the recursive one drifts.
    problem.lower_hvp(x, &w, &mut q)?;
    let residual_sq = gf.iter().zip(&q).map(|(f, h)| (f + h).powi(2)).sum();
    Ok(GradReformResidual { residual_sq, w, iterations, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub lambda: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub primal_gap: f64,
    pub scaled_ok: bool,
    pub unscaled_ok: bool,
    pub infeasible_stationary_ok: bool,
    pub grad_reform_eps_p: f64,
    pub grad_reform_eps_d: f64,
    pub w_norm: f64,
    pub ls_iterations: usize,
    pub ls_converged: bool,
}

pub fn kkt_report(problem: &ProblemSpec, x: &[f64], lambda: f64, eps_p: f64, eps_d: f64, ls_tol: f64) -> Result<KktReport> {
    let g_star = problem.lower_optimum().ok_or(Error::Capability("lower_optimum"))?;
    if !problem.has_lower_hvp() {
        return Err(Error::Capability("lower_hvp"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Precondition(format!("KKT multiplier must be finite and ≥ 0 (got {lambda})")));
    }
    if !(eps_p >= 0.0 && eps_d >= 0.0) {
        return Err(Error::Precondition("KKT tolerances must be ≥ 0".into()));
    }
    let rep = stationarity_report(problem, x, lambda)?;
    let primal_gap = rep.g - g_star;
    let cond = kkt_conditions(primal_gap, rep.grad_g_sq.sqrt(), rep.d_sq.sqrt(), lambda, eps_p, eps_d);
    let ls = grad_reform_residual(problem, x, ls_tol)?;
    Ok(KktReport {
        lambda,
        eps_p,
        eps_d,
        primal_gap,
        scaled_ok: cond.scaled,
        unscaled_ok: cond.unscaled,
        infeasible_stationary_ok: cond.infeasible_stationary,
        grad_reform_eps_p: ls.residual_sq,
        grad_reform_eps_d: rep.grad_g_sq,
        w_norm: norm(&ls.w),
        ls_iterations: ls.iterations,
        ls_converged: ls.converged,
    })
}
