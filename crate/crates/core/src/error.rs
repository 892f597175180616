use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported significance level alpha = {0} (need 0 < alpha < 0.5)")]
    UnsupportedLevel(f64),

    /// The critical-value solver did not converge; carries the bisection trace.
    #[error("critical value solver failed: {reason} (after {} iterations)", trace.len())]
    Solver {
        reason: String,
        trace: Vec<SolverStep>,
    },

    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    /// A derived quantity could not be computed from otherwise valid inputs.
    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One bisection step of the critical-value solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverStep {
    pub c: f64,
    pub infimal_coverage: f64,
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
