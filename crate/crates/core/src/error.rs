//! Error types shared across the library.

use thiserror::Error;

/// Errors raised while constructing or querying market data.
#[derive(Debug, Error)]
pub enum MarketError {
    #[error("rate curve needs {0}")]
    InvalidCurve(String),
    #[error("time {t} outside the curve domain [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("interval [{t0}, {t1}] is not ordered")]
    BadInterval { t0: f64, t1: f64 },
    #[error("equity model needs {0}")]
    InvalidEquity(String),
    #[error("lattice needs {0}")]
    InvalidLattice(String),
    #[error("step {step}: drift {drift} gives weight q = {q} outside (0, 1); refine the grid or reduce the drift")]
    InvalidWeight { step: usize, drift: f64, q: f64 },
    #[error("breakpoint {breakpoint} does not sit on the {n}-step grid (dt = {dt})")]
    MisalignedBreakpoint { breakpoint: f64, dt: f64, n: usize },
    #[error("path enumeration limited to 24 steps, got {0}")]
    TooManyPaths(usize),
}

/// Errors raised by the wealth engine.
#[derive(Debug, Error)]
pub enum ConventionError {
    #[error("convention requires {0}")]
    RateShape(String),
    #[error("scenario needs {0}")]
    BadScenario(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Errors raised by the backward solver.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("driver is not a contraction at this grid: L*dt = {product} >= 1; use at least {required_steps} steps")]
    NonContraction { product: f64, required_steps: usize },
    #[error("fixed point did not converge at node ({step}, {index}): last delta {delta}")]
    FixedPoint { step: usize, index: usize, delta: f64 },
    #[error("pricing setup needs {0}")]
    Setup(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Errors raised by the verification suite.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("verification setup needs {0}")]
    Setup(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Convention(#[from] ConventionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Errors raised by the expression parser.
#[derive(Debug, Error)]
#[error("expression error at byte {position}: {message}")]
pub struct ExprError {
    pub position: usize,
    pub message: String,
}
