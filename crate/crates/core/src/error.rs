use thiserror::Error;

/// Errors raised by the chart calculus, flow, lift and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at node (base {base}, tau {tau}) in {what}")]
    NonFinite {
        what: String,
        base: usize,
        tau: usize,
    },

    #[error("degenerate |V|^2 = 0 at interior node (base {base}, tau {tau})")]
    Degenerate { base: usize, tau: usize },

    #[error("non-positive metric profile at node {index}: {value}")]
    NonPositiveProfile { index: usize, value: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    Stability { dt: f64, bound: f64 },

    #[error("constraint violated: {what} (worst value {worst} at base {base}, tau/time index {tau})")]
    Constraint {
        what: String,
        worst: f64,
        base: usize,
        tau: usize,
    },

    #[error("potential is not admissible: {what} at node {node} (value {value})")]
    Admissibility {
        what: String,
        node: usize,
        value: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("critical moment value inside range: {0}")]
    CriticalValue(String),

    #[error("ODE integration stopped at r = {at}: {reason}")]
    OdeStopped { at: f64, reason: String },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
