use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid parameters or a config/problem mismatch.
    #[error("configuration error: {0}")]
    Config(String),

    /// The problem lacks an optional capability an operation needs.
    #[error("capability error: problem does not provide {0}")]
    Capability(&'static str),

    /// A non-finite value appeared during a run.
    #[error("divergence at iteration {iteration}: {quantity} is not finite")]
    Divergence { iteration: usize, quantity: &'static str },

    /// A non-finite value appeared while evaluating a single point.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The direction subproblem has an empty feasible set.
    #[error("direction subproblem is infeasible: ∇g = 0 but φ = {phi}")]
    Infeasible { phi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}
