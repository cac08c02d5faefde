//! Simple bilevel problem instances.
//!
//! A problem supplies an upper objective `f`, a lower objective `g`, their
//! gradients, and optionally a lower Hessian-vector product, the lower optimum
//! `g*`, and smoothness constants. Vectors are flat `&[f64]`; matrix-valued
//! variables are stored row-major.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot};
use crate::rng;

/// Evaluators for one simple bilevel instance.
///
/// Implementations must be re-entrant: the solver may call them from several
/// threads at once when running parameter grids.
pub trait BilevelProblem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn upper(&self, x: &[f64]) -> f64;
    fn lower(&self, x: &[f64]) -> f64;
    fn upper_grad(&self, x: &[f64], out: &mut [f64]);
    fn lower_grad(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∇²g(x) v` into `out`. Problems without second-order
    /// information keep the default.
    fn lower_hvp(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::Capability("a lower-level Hessian-vector product"))
    }

    fn has_lower_hvp(&self) -> bool {
        false
    }

    /// Known `g* = min g`, if any.
    fn lower_optimum(&self) -> Option<f64> {
        None
    }

    fn smoothness(&self) -> Option<SmoothnessProfile> {
        None
    }
}

/// Smoothness constants used by step-size schedules and inequality audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    /// Bound on `‖∇f‖`; `None` when no bound is known.
    pub grad_bound: Option<f64>,
    /// Lipschitz constant of `∇f`.
    pub lf: f64,
    /// Lipschitz constant of `∇g`.
    pub lg: f64,
}

impl SmoothnessProfile {
    pub fn new(grad_bound: Option<f64>, lf: f64, lg: f64) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(lf) || !positive(lg) || grad_bound.is_some_and(|g| !positive(g)) {
            return Err(Error::Config(format!(
                "smoothness constants must be finite and strictly positive (G_f={grad_bound:?}, L_f={lf}, L_g={lg})"
            )));
        }
        Ok(Self { grad_bound, lf, lg })
    }

    /// `L = L_f + L_g`.
    pub fn l(&self) -> f64 {
        self.lf + self.lg
    }
}

/// Shared, immutable handle to a problem.
#[derive(Clone)]
pub struct ProblemSpec {
    inner: Arc<dyn BilevelProblem>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.inner.name())
            .field("dim", &self.inner.dim())
            .field("lower_optimum", &self.inner.lower_optimum())
            .field("smoothness", &self.inner.smoothness())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new<P: BilevelProblem + 'static>(problem: P) -> Self {
        Self { inner: Arc::new(problem) }
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn upper(&self, x: &[f64]) -> f64 {
        self.inner.upper(x)
    }

    pub fn lower(&self, x: &[f64]) -> f64 {
        let v = self.inner.lower(x);
        if let Some(g_star) = self.inner.lower_optimum() {
            debug_assert!(
                !(v < g_star),
                "{}: g(x) = {v} fell below the declared g* = {g_star}",
                self.inner.name()
            );
        }
        v
    }

    pub fn upper_grad(&self, x: &[f64], out: &mut [f64]) {
        self.inner.upper_grad(x, out)
    }

    pub fn lower_grad(&self, x: &[f64], out: &mut [f64]) {
        self.inner.lower_grad(x, out)
    }

    pub fn lower_hvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.lower_hvp(x, v, out)
    }

    pub fn has_lower_hvp(&self) -> bool {
        self.inner.has_lower_hvp()
    }

    pub fn lower_optimum(&self) -> Option<f64> {
        self.inner.lower_optimum()
    }

    pub fn smoothness(&self) -> Option<SmoothnessProfile> {
        self.inner.smoothness()
    }

    /// Allocating convenience wrapper around [`Self::upper_grad`].
    pub fn upper_grad_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.upper_grad(x, &mut out);
        out
    }

    /// Allocating convenience wrapper around [`Self::lower_grad`].
    pub fn lower_grad_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.lower_grad(x, &mut out);
        out
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Config(format!(
                "point has dimension {} but problem '{}' has dimension {}",
                x.len(),
                self.name(),
                self.dim()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Toy problem
// ---------------------------------------------------------------------------

/// Half-width of the box `[-4, 4]²` on which the toy smoothness constants hold.
pub const TOY_BOX: f64 = 4.0;

/// `f(x) = (x₁ + π/20)² + (x₂ + 1)²`, `g(x) = (x₂ − sin 10x₁)²`.
///
/// The lower solution set is the curve `x₂ = sin(10x₁)` and the bilevel
/// optimum is `(−π/20, −1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyProblem;

impl ToyProblem {
    const SHIFT: f64 = PI / 20.0;

    fn residual(x: &[f64]) -> f64 {
        x[1] - (10.0 * x[0]).sin()
    }

    /// Constants on `[−4, 4]²`: `L_f = 2`; `G_f = max ‖∇f‖` over the box
    /// corners; `L_g` bounds `‖∇²g‖₂` by the Gershgorin row sum of
    /// `[[200cos² + 200 s sin, −20cos], [−20cos, 2]]` with `|s| ≤ 5`.
    pub fn box_profile() -> SmoothnessProfile {
        let corner_grad = |a: f64, b: f64| 2.0 * ((a + Self::SHIFT).powi(2) + (b + 1.0).powi(2)).sqrt();
        let gf = [(-TOY_BOX, -TOY_BOX), (-TOY_BOX, TOY_BOX), (TOY_BOX, -TOY_BOX), (TOY_BOX, TOY_BOX)]
            .iter()
            .map(|&(a, b)| corner_grad(a, b))
            .fold(0.0, f64::max);
        let s_max = TOY_BOX + 1.0;
        let lg = (200.0 + 200.0 * s_max + 20.0).max(20.0 + 2.0);
        SmoothnessProfile { grad_bound: Some(gf), lf: 2.0, lg }
    }
}

impl BilevelProblem for ToyProblem {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        2
    }

    fn upper(&self, x: &[f64]) -> f64 {
        (x[0] + Self::SHIFT).powi(2) + (x[1] + 1.0).powi(2)
    }

    fn lower(&self, x: &[f64]) -> f64 {
        Self::residual(x).powi(2)
    }

    fn upper_grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * (x[0] + Self::SHIFT);
        out[1] = 2.0 * (x[1] + 1.0);
    }

    fn lower_grad(&self, x: &[f64], out: &mut [f64]) {
        let s = Self::residual(x);
        out[0] = -20.0 * s * (10.0 * x[0]).cos();
        out[1] = 2.0 * s;
    }

    fn lower_hvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let s = Self::residual(x);
        let (sin, cos) = (10.0 * x[0]).sin_cos();
        let h11 = 200.0 * cos * cos + 200.0 * s * sin;
        let h12 = -20.0 * cos;
        out[0] = h11 * v[0] + h12 * v[1];
        out[1] = h12 * v[0] + 2.0 * v[1];
        Ok(())
    }

    fn has_lower_hvp(&self) -> bool {
        true
    }

    fn lower_optimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<SmoothnessProfile> {
        Some(Self::box_profile())
    }
}

pub fn toy_problem() -> ProblemSpec {
    ProblemSpec::new(ToyProblem)
}

// ---------------------------------------------------------------------------
// Quadratic sanity problem
// ---------------------------------------------------------------------------

/// `f(x) = ½‖x − 1‖²`, `g(x) = ½‖x‖²`.
///
/// The lower solution set is `{0}`, so `x = 0` is the unique bilevel
/// solution. `G_f` is the bound on `‖∇f‖` over the box `[0, 1]ⁿ`, i.e. `√n`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticSanity {
    n: usize,
}

impl BilevelProblem for QuadraticSanity {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn upper(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>()
    }

    fn lower(&self, x: &[f64]) -> f64 {
        0.5 * linalg::norm_sq(x)
    }

    fn upper_grad(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v - 1.0;
        }
    }

    fn lower_grad(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn lower_hvp(&self, _x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(v);
        Ok(())
    }

    fn has_lower_hvp(&self) -> bool {
        true
    }

    fn lower_optimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<SmoothnessProfile> {
        Some(SmoothnessProfile { grad_bound: Some((self.n as f64).sqrt()), lf: 1.0, lg: 1.0 })
    }
}

pub fn quadratic_sanity_problem(n: usize) -> Result<ProblemSpec> {
    if n == 0 {
        return Err(Error::Config("quadratic sanity problem needs n ≥ 1".into()));
    }
    Ok(ProblemSpec::new(QuadraticSanity { n }))
}

// ---------------------------------------------------------------------------
// Matrix factorization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsityPenalty {
    /// `Σ √(U_ij² + α)`
    SmoothL1,
    /// `Σ log(1 + U_ij²/α)`
    LogSmooth,
}

impl fmt::Display for SparsityPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparsityPenalty::SmoothL1 => "smooth-l1",
            SparsityPenalty::LogSmooth => "log-smooth",
        })
    }
}

/// `min f(U)` over `U ∈ argmin_V ‖M − VVᵀ‖_F²` with `U, V ∈ ℝ^{n×r}`.
#[derive(Debug, Clone)]
pub struct MatrixFactorization {
    n: usize,
    r: usize,
    alpha: f64,
    penalty: SparsityPenalty,
    target: Vec<f64>,
    generator: Vec<f64>,
    noise: f64,
    profile: SmoothnessProfile,
    name: String,
}

impl MatrixFactorization {
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// The `U*` used to build the target.
    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    /// The scalar `ε` in `M = U*U*ᵀ + εI`.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// `R = M − VVᵀ` (n×n, row-major).
    fn residual(&self, v: &[f64], out: &mut [f64]) {
        linalg::mul_transpose(v, v, self.n, self.r, self.n, out);
        for (o, m) in out.iter_mut().zip(&self.target) {
            *o = m - *o;
        }
    }
}

impl BilevelProblem for MatrixFactorization {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n * self.r
    }

    fn upper(&self, x: &[f64]) -> f64 {
        let a = self.alpha;
        match self.penalty {
            SparsityPenalty::SmoothL1 => x.iter().map(|u| (u * u + a).sqrt()).sum(),
            SparsityPenalty::LogSmooth => x.iter().map(|u| (u * u / a).ln_1p()).sum(),
        }
    }

    fn lower(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n * self.n];
        self.residual(x, &mut r);
        linalg::norm_sq(&r)
    }

    fn upper_grad(&self, x: &[f64], out: &mut [f64]) {
        let a = self.alpha;
        for (o, u) in out.iter_mut().zip(x) {
            *o = match self.penalty {
                SparsityPenalty::SmoothL1 => u / (u * u + a).sqrt(),
                SparsityPenalty::LogSmooth => 2.0 * u / (a + u * u),
            };
        }
    }

    // ∇g(V) = −4 (M − VVᵀ) V for symmetric M.
    fn lower_grad(&self, x: &[f64], out: &mut [f64]) {
        let mut r = vec![0.0; self.n * self.n];
        self.residual(x, &mut r);
        linalg::matmul(&r, x, self.n, self.n, self.r, out);
        out.iter_mut().for_each(|v| *v *= -4.0);
    }

    // ∇²g(V)[W] = 4 (WVᵀ + VWᵀ) V − 4 R W.
    fn lower_hvp(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, r) = (self.n, self.r);
        let mut res = vec![0.0; n * n];
        self.residual(x, &mut res);
        let mut sym = vec![0.0; n * n];
        linalg::mul_transpose(w, x, n, r, n, &mut sym);
        for i in 0..n {
            for j in 0..i {
                let s = sym[i * n + j] + sym[j * n + i];
                sym[i * n + j] = s;
                sym[j * n + i] = s;
            }
            sym[i * n + i] *= 2.0;
        }
        let mut first = vec![0.0; n * r];
        linalg::matmul(&sym, x, n, n, r, &mut first);
        linalg::matmul(&res, w, n, n, r, out);
        for (o, f) in out.iter_mut().zip(&first) {
            *o = 4.0 * f - 4.0 * *o;
        }
        Ok(())
    }

    fn has_lower_hvp(&self) -> bool {
        true
    }

    fn smoothness(&self) -> Option<SmoothnessProfile> {
        Some(self.profile)
    }
}

/// Builds the matrix-factorization instance.
///
/// `U*` has seeded standard-normal entries and `M = U*U*ᵀ + εIₙ` with one
/// scalar `ε ~ N(0, noise_std²)`. `g*` is left unknown.
///
/// Smoothness constants: `G_f` and `L_f` are global (`√(nr)` and `1/√α` for
/// smooth-l1, `√(nr/α)` and `2/α` for log-smooth). `L_g` holds on the
/// Frobenius ball `‖V‖_F ≤ ρ = 2‖U*‖_F`, where `‖∇²g(V)‖ ≤ 12ρ² + 4‖M‖_F`.
pub fn matrix_factorization_problem(
    n: usize,
    r: usize,
    alpha: f64,
    penalty: SparsityPenalty,
    noise_std: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    Ok(ProblemSpec::new(build_matrix_factorization(n, r, alpha, penalty, noise_std, seed)?))
}

pub fn build_matrix_factorization(
    n: usize,
    r: usize,
    alpha: f64,
    penalty: SparsityPenalty,
    noise_std: f64,
    seed: u64,
) -> Result<MatrixFactorization> {
    if r == 0 || r > n {
        return Err(Error::Config(format!("matrix factorization needs n ≥ r ≥ 1 (n={n}, r={r})")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be > 0 (got {alpha})")));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Config(format!("noise_std must be ≥ 0 (got {noise_std})")));
    }
    let mut rng = rng::seeded(seed);
    let generator = rng::standard_normal_vec(&mut rng, n * r);
    let noise = noise_std * rng::standard_normal_vec(&mut rng, 1)[0];
    let mut target = vec![0.0; n * n];
    linalg::mul_transpose(&generator, &generator, n, r, n, &mut target);
    for i in 0..n {
        target[i * n + i] += noise;
    }

    let nr = (n * r) as f64;
    let (gf, lf) = match penalty {
        SparsityPenalty::SmoothL1 => (nr.sqrt(), 1.0 / alpha.sqrt()),
        SparsityPenalty::LogSmooth => ((nr / alpha).sqrt(), 2.0 / alpha),
    };
    let rho_sq = 4.0 * linalg::norm_sq(&generator);
    let lg = 12.0 * rho_sq + 4.0 * linalg::norm(&target);
    let profile = SmoothnessProfile::new(Some(gf), lf, lg)?;

    Ok(MatrixFactorization {
        n,
        r,
        alpha,
        penalty,
        target,
        generator,
        noise,
        profile,
        name: format!("matfac-{penalty}"),
    })
}

/// Default initialization for matrix factorization runs: seeded standard
/// normal entries scaled by `scale`.
pub fn gaussian_init(dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    rng::standard_normal_vec(&mut rng, dim).into_iter().map(|v| scale * v).collect()
}

/// `v·(Hu)` and `u·(Hv)` for the lower Hessian at `x`.
pub fn hvp_symmetry_pair(problem: &ProblemSpec, x: &[f64], u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let n = problem.dim();
    let mut hu = vec![0.0; n];
    let mut hv = vec![0.0; n];
    problem.lower_hvp(x, u, &mut hu)?;
    problem.lower_hvp(x, v, &mut hv)?;
    Ok((dot(v, &hu), dot(u, &hv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_values() {
        let p = toy_problem();
        assert_eq!(p.upper(&[-PI / 20.0, -1.0]), 0.0);
        assert_eq!(p.lower_grad_vec(&[0.0, 0.0]), vec![0.0, 0.0]);
        // (π/20)² + 1 to 40 digits: 1.0246740110027233965...
        assert!((p.upper(&[0.0, 0.0]) - 1.024_674_011_002_723_4).abs() < 1e-15);
    }

    #[test]
    fn toy_lower_vanishes_on_curve() {
        let p = toy_problem();
        for i in 0..200 {
            let t = -4.0 + 8.0 * i as f64 / 199.0;
            assert_eq!(p.lower(&[t, (10.0 * t).sin()]), 0.0);
        }
    }

    #[test]
    fn toy_profile_constants() {
        let prof = ToyProblem::box_profile();
        assert_eq!(prof.lf, 2.0);
        assert_eq!(prof.lg, 1220.0);
        // 2√((4+π/20)² + 25) = 13.0048161959235149...
        assert!((prof.grad_bound.unwrap() - 13.004_816_195_923_515).abs() < 1e-12);
        assert_eq!(prof.l(), prof.lf + prof.lg);
    }

    #[test]
    fn quadratic_values() {
        let p = quadratic_sanity_problem(3).unwrap();
        assert_eq!(p.lower_grad_vec(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(p.upper_grad_vec(&[0.0; 3]), vec![-1.0; 3]);
        assert!(quadratic_sanity_problem(0).is_err());
    }

    #[test]
    fn matfac_penalties_at_zero() {
        let p = matrix_factorization_problem(6, 4, 1.0, SparsityPenalty::SmoothL1, 0.1, 1).unwrap();
        assert_eq!(p.upper(&vec![0.0; 24]), 24.0);
        let q = matrix_factorization_problem(6, 4, 0.3, SparsityPenalty::LogSmooth, 0.1, 1).unwrap();
        assert_eq!(q.upper(&vec![0.0; 24]), 0.0);
    }

    #[test]
    fn matfac_rejects_bad_shapes() {
        assert!(matrix_factorization_problem(3, 4, 1.0, SparsityPenalty::SmoothL1, 0.1, 0).is_err());
        assert!(matrix_factorization_problem(3, 0, 1.0, SparsityPenalty::SmoothL1, 0.1, 0).is_err());
        assert!(matrix_factorization_problem(3, 2, 0.0, SparsityPenalty::SmoothL1, 0.1, 0).is_err());
        assert!(matrix_factorization_problem(3, 2, -1.0, SparsityPenalty::LogSmooth, 0.1, 0).is_err());
    }

    #[test]
    fn matfac_is_deterministic_per_seed() {
        let a = build_matrix_factorization(10, 10, 1.0, SparsityPenalty::SmoothL1, 0.1, 42).unwrap();
        let b = build_matrix_factorization(10, 10, 1.0, SparsityPenalty::SmoothL1, 0.1, 42).unwrap();
        let c = build_matrix_factorization(10, 10, 1.0, SparsityPenalty::SmoothL1, 0.1, 43).unwrap();
        assert!(a.target().iter().zip(b.target()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.target(), c.target());
    }

    #[test]
    fn matfac_target_is_symmetric_with_scalar_noise() {
        let mf = build_matrix_factorization(5, 3, 1.0, SparsityPenalty::SmoothL1, 0.1, 9).unwrap();
        let n = 5;
        let mut gram = vec![0.0; n * n];
        linalg::mul_transpose(mf.generator(), mf.generator(), n, 3, n, &mut gram);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(mf.target()[i * n + j], mf.target()[j * n + i]);
                let expect = gram[i * n + j] + if i == j { mf.noise() } else { 0.0 };
                assert_eq!(mf.target()[i * n + j], expect);
            }
        }
    }

    #[test]
    fn matfac_lower_is_zero_at_exact_factor() {
        let mf = build_matrix_factorization(4, 4, 1.0, SparsityPenalty::SmoothL1, 0.0, 5).unwrap();
        let u = mf.generator().to_vec();
        assert!(mf.lower(&u) < 1e-20);
        let mut grad = vec![0.0; 16];
        mf.lower_grad(&u, &mut grad);
        assert!(linalg::norm(&grad) < 1e-10);
    }

    #[test]
    fn hvp_is_symmetric() {
        let mut rng = rng::seeded(77);
        let problems = [
            toy_problem(),
            quadratic_sanity_problem(4).unwrap(),
            matrix_factorization_problem(5, 3, 1.0, SparsityPenalty::LogSmooth, 0.1, 2).unwrap(),
        ];
        for p in &problems {
            let n = p.dim();
            for _ in 0..20 {
                let x = rng::standard_normal_vec(&mut rng, n);
                let u = rng::standard_normal_vec(&mut rng, n);
                let v = rng::standard_normal_vec(&mut rng, n);
                let (a, b) = hvp_symmetry_pair(p, &x, &u, &v).unwrap();
                assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-300), "{}: {a} vs {b}", p.name());
            }
        }
    }

    #[test]
    fn profile_rejects_nonpositive() {
        assert!(SmoothnessProfile::new(Some(1.0), 0.0, 1.0).is_err());
        assert!(SmoothnessProfile::new(Some(-1.0), 1.0, 1.0).is_err());
        assert!(SmoothnessProfile::new(None, 1.0, 1.0).is_ok());
    }
}
