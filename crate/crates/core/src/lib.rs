//! Dynamic barrier gradient descent (DBGD) for nonconvex simple bilevel
//! optimization.
//!
//! The problem class is
//!
//! ```text
//! minimize f(x)  subject to  x ∈ argmin_z g(z)
//! ```
//!
//! with smooth, possibly nonconvex `f` and `g`. At every iterate DBGD
//! projects `∇f` onto the halfspace `{d : ∇g·d ≥ φ(x)}` and steps along the
//! projection, so the multiplier on `∇g` adapts to how far the iterate is
//! from lower-level stationarity.
//!
//! The crate is split by role:
//!
//! - [`problems`]: the [`ProblemSpec`] abstraction and built-in instances.
//! - [`direction`]: closed-form direction rules, baselines and a bisection
//!   oracle for the direction subproblem.
//! - [`solver`]: the iteration itself, step-size schedules and traces.
//! - [`metrics`]: stationarity and KKT certificates at a candidate point.
//! - [`verify`]: finite-difference checks, inequality audits, sampled local
//!   certificates and empirical rate fits.
//!
//! ```
//! use dbgd::problems::quadratic_sanity_problem;
//! use dbgd::solver::{run, Method, SolverConfig, StepMode};
//! use dbgd::direction::PhiRule;
//!
//! let problem = quadratic_sanity_problem(3).unwrap();
//! let config = SolverConfig::new(
//!     Method::Dbgd(PhiRule::GradNormSquared { beta: 1.0 }),
//!     StepMode::Constant(0.5),
//!     200,
//! );
//! let out = run(&problem, &config, &[0.5, 0.5, 0.5]).unwrap();
//! let x = out.final_x.unwrap();
//! assert!(x.iter().all(|v| v.abs() < 1e-3));
//! ```

pub mod direction;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use problems::{BilevelProblem, ProblemSpec, SmoothnessProfile};

/// Default degeneracy guard on `‖∇g‖²` (i.e. `‖∇g‖ ≤ 1e-12`).
pub const DEFAULT_GUARD: f64 = 1e-24;
