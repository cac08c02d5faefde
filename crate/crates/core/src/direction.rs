//! Direction rules.
//!
//! DBGD picks `d` as the Euclidean projection of `∇f` onto the halfspace
//! `{d : ∇g·d ≥ φ}`:
//!
//! ```text
//! d = argmin ‖∇f − d‖²  s.t.  ∇g·d ≥ φ
//!   = ∇f + λ∇g,   λ = max{(φ − ∇f·∇g)/‖∇g‖², 0}
//! ```
//!
//! This module holds the closed form, the BLOOP and penalty baselines, and a
//! bisection solver for the same subproblem that never touches the closed
//! form, used as an oracle in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_scaled, dot, norm_sq};

/// Choice of barrier `φ(x)` for the direction subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiRule {
    /// `φ = β‖∇g‖²`, `0 ≤ β ≤ 1`.
    GradNormSquared { beta: f64 },
    /// `φ = min{α(g − g*), β‖∇g‖²}`. `g_star: None` takes `g*` from the problem.
    DynamicBarrierMin { alpha: f64, beta: f64, g_star: Option<f64> },
    /// `φ = (g − g*)/η`, the lower-level linearization rule.
    LowerLinearization { g_star: Option<f64>, eta: f64 },
    /// Equality-constrained projection `∇g·d = β‖∇g‖²` (BLOOP).
    BloopOrthogonal { beta: f64 },
}

impl PhiRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            PhiRule::GradNormSquared { beta } if !(0.0..=1.0).contains(&beta) => {
                bad(format!("grad-norm-squared rule needs 0 ≤ β ≤ 1 (got {beta})"))
            }
            PhiRule::DynamicBarrierMin { alpha, beta, g_star } => {
                if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
                    bad(format!("dynamic-barrier-min rule needs α > 0 and β > 0 (got α={alpha}, β={beta})"))
                } else if g_star.is_some_and(|g| !g.is_finite()) {
                    bad("g* must be finite".into())
                } else {
                    Ok(())
                }
            }
            PhiRule::LowerLinearization { g_star, eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    bad(format!("lower-linearization rule needs η > 0 (got {eta})"))
                } else if g_star.is_some_and(|g| !g.is_finite()) {
                    bad("g* must be finite".into())
                } else {
                    Ok(())
                }
            }
            PhiRule::BloopOrthogonal { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                bad(format!("BLOOP rule needs β ≥ 0 (got {beta})"))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_g_star(&self) -> bool {
        matches!(self, PhiRule::DynamicBarrierMin { .. } | PhiRule::LowerLinearization { .. })
    }

    /// Fills a missing `g*` from the problem's declared lower optimum.
    pub fn resolve_g_star(self, problem_g_star: Option<f64>) -> Result<Self> {
        let fill = |g: Option<f64>| {
            g.or(problem_g_star).ok_or_else(|| {
                Error::Config("φ rule needs g* but neither the rule nor the problem provides it".into())
            })
        };
        Ok(match self {
            PhiRule::DynamicBarrierMin { alpha, beta, g_star } => {
                PhiRule::DynamicBarrierMin { alpha, beta, g_star: Some(fill(g_star)?) }
            }
            PhiRule::LowerLinearization { g_star, eta } => {
                PhiRule::LowerLinearization { g_star: Some(fill(g_star)?), eta }
            }
            other => other,
        })
    }

    /// The `β` of rules that have one.
    pub fn beta(&self) -> Option<f64> {
        match *self {
            PhiRule::GradNormSquared { beta }
            | PhiRule::DynamicBarrierMin { beta, .. }
            | PhiRule::BloopOrthogonal { beta } => Some(beta),
            PhiRule::LowerLinearization { .. } => None,
        }
    }

    /// Same rule with `β` replaced (no-op for rules without `β`).
    pub fn with_beta(self, beta: f64) -> Self {
        match self {
            PhiRule::GradNormSquared { .. } => PhiRule::GradNormSquared { beta },
            PhiRule::DynamicBarrierMin { alpha, g_star, .. } => PhiRule::DynamicBarrierMin { alpha, beta, g_star },
            PhiRule::BloopOrthogonal { .. } => PhiRule::BloopOrthogonal { beta },
            other => other,
        }
    }
}

/// Value of `φ` plus whether it had to be clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    /// Set when `g < g*` made the raw value negative; a sign of a bad `g*`.
    pub clamped: bool,
}

pub fn phi_value(rule: &PhiRule, g_val: f64, grad_g: &[f64]) -> Result<PhiValue> {
    let gap = |g_star: Option<f64>| {
        g_star
            .map(|gs| g_val - gs)
            .ok_or_else(|| Error::Config("φ rule needs g* but none was supplied".into()))
    };
    let raw = match *rule {
        PhiRule::GradNormSquared { beta } => beta * norm_sq(grad_g),
        PhiRule::DynamicBarrierMin { alpha, beta, g_star } => (alpha * gap(g_star)?).min(beta * norm_sq(grad_g)),
        PhiRule::LowerLinearization { g_star, eta } => gap(g_star)? / eta,
        PhiRule::BloopOrthogonal { .. } => {
            return Err(Error::Config("BLOOP uses an equality constraint and has no φ value".into()))
        }
    };
    Ok(if raw < 0.0 { PhiValue { value: 0.0, clamped: true } } else { PhiValue { value: raw, clamped: false } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub d: Vec<f64>,
    /// Multiplier on `∇g`. Nonnegative except for BLOOP's equality multiplier.
    pub lambda: f64,
    pub phi_value: f64,
    /// `‖∇g‖²` fell at or below the guard.
    pub degenerate: bool,
}

/// `λ = max{(φ − ∇f·∇g)/‖∇g‖², 0}`, or `(0, true)` when `‖∇g‖² ≤ guard`.
pub fn lambda_closed_form(grad_f: &[f64], grad_g: &[f64], phi: f64, guard: f64) -> (f64, bool) {
    let gg = norm_sq(grad_g);
    if gg <= guard {
        return (0.0, true);
    }
    (((phi - dot(grad_f, grad_g)) / gg).max(0.0), false)
}

pub fn dbgd_direction(grad_f: &[f64], grad_g: &[f64], phi: f64, guard: f64) -> DirectionResult {
    let (lambda, degenerate) = lambda_closed_form(grad_f, grad_g, phi, guard);
    let mut d = vec![0.0; grad_f.len()];
    add_scaled(grad_f, lambda, grad_g, &mut d);
    DirectionResult { d, lambda, phi_value: phi, degenerate }
}

/// `d = β∇g + (∇f − (∇f·∇g/‖∇g‖²)∇g)`; `λ` records the signed equality
/// multiplier `β − ∇f·∇g/‖∇g‖²`.
pub fn bloop_direction(grad_f: &[f64], grad_g: &[f64], beta: f64, guard: f64) -> DirectionResult {
    let gg = norm_sq(grad_g);
    if gg <= guard {
        return DirectionResult { d: grad_f.to_vec(), lambda: 0.0, phi_value: beta * gg, degenerate: true };
    }
    let lambda = beta - dot(grad_f, grad_g) / gg;
    let mut d = vec![0.0; grad_f.len()];
    add_scaled(grad_f, lambda, grad_g, &mut d);
    DirectionResult { d, lambda, phi_value: beta * gg, degenerate: false }
}

/// Fixed-multiplier baseline `d = ∇f + λ∇g`.
pub fn penalty_direction(grad_f: &[f64], grad_g: &[f64], lambda: f64) -> DirectionResult {
    let mut d = vec![0.0; grad_f.len()];
    add_scaled(grad_f, lambda, grad_g, &mut d);
    DirectionResult { d, lambda, phi_value: 0.0, degenerate: false }
}

/// Solves the direction subproblem by bisection on the dual.
///
/// For `d(λ) = ∇f + λ∇g` the constraint slack `c(λ) = ∇g·d(λ) − φ` is
/// nondecreasing in `λ`. If `c(0) ≥ 0` the constraint is inactive. Otherwise
/// an upper bracket is found by doubling and `λ` is bisected until the
/// bracket moves `d` by at most `tol`. The feasible end of the bracket is
/// returned.
pub fn qp_oracle_direction(grad_f: &[f64], grad_g: &[f64], phi: f64, tol: f64) -> Result<DirectionResult> {
    if !(phi >= 0.0) {
        return Err(Error::Precondition(format!("φ must be ≥ 0 (got {phi})")));
    }
    let gg = norm_sq(grad_g);
    let slack = |lambda: f64| -> f64 {
        grad_f.iter().zip(grad_g).map(|(f, g)| g * (f + lambda * g)).sum::<f64>() - phi
    };
    let build = |lambda: f64| {
        let d: Vec<f64> = grad_f.iter().zip(grad_g).map(|(f, g)| f + lambda * g).collect();
        DirectionResult { d, lambda, phi_value: phi, degenerate: false }
    };
    if slack(0.0) >= 0.0 {
        return Ok(build(0.0));
    }
    if gg == 0.0 {
        return Err(Error::Infeasible { phi });
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while slack(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible { phi });
        }
    }
    let g_norm = gg.sqrt();
    for _ in 0..2000 {
        if (hi - lo) * g_norm <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slack(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(build(hi))
}
