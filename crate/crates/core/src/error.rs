use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("ill-conditioned matrix: condition number {0:.3e} exceeds 1e8")]
    IllConditioned(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "quadrature failed to reach tolerance {tol:.1e} on [{a}, {b}] (estimate {estimate:.3e})"
    )]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("implicit step diverged at t = {t} with step {step}")]
    ImplicitSolve { t: f64, step: f64 },

    #[error("continuation stalled at amplitude {reached} (target {target}, step {step:.2e})")]
    ContinuationStall {
        reached: f64,
        target: f64,
        step: f64,
    },

    #[error("trajectory does not close: {0}")]
    NonClosure(String),

    #[error("infeasible homology class: {0}")]
    InfeasibleClass(String),

    #[error("energy window infeasible: {0}")]
    WindowInfeasible(String),

    #[error("orbit leaves the plateau region of the cut-off: {0}")]
    RegionViolation(String),

    #[error("matrix is not symmetric (defect {0:.3e})")]
    Asymmetric(f64),

    #[error("no bracket found: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;
