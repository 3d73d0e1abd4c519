use thiserror::Error;

/// Errors shared by validation, series arithmetic, solvers, and samplers.
#[derive(Debug, Clone, Error)]
pub enum QprocError {
    /// Input vector is not a probability distribution (negative entry,
    /// non-finite entry, or mass not summing to one).
    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    /// Law fails a standing assumption (p0 > 0, p0 + p1 < 1, bounded support).
    #[error("offspring law assumption violated: {0}")]
    AssumptionViolated(String),

    /// Critical laws (mean one) make the conditioned chain transient and are
    /// rejected wherever derived parameters are required.
    #[error("critical offspring law (mean 1) is unsupported")]
    CriticalLawUnsupported,

    /// An iterative solver exhausted its budget without meeting tolerance.
    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),

    /// Requested truncation exceeds the configured cap.
    #[error("truncation {requested} exceeds cap {cap}")]
    TruncationOverflow { requested: usize, cap: usize },

    /// Table caps leak more probability mass than allowed.
    #[error("caps too small: leaked mass {leakage:e} exceeds {limit:e}")]
    CapTooSmall { leakage: f64, limit: f64 },

    /// A sample or scale with zero spread where positive spread is required.
    #[error("degenerate sample: zero spread")]
    DegenerateSample,

    /// The curvature constant of the log-scale contraction factor must be
    /// positive for normal-limit checks.
    #[error("nonpositive curvature constant c_rho = {0}")]
    NonpositiveCRho(f64),

    /// Guarded division by a vanishing quantity.
    #[error("division by zero: {0}")]
    DivisionByZero(String),
}

pub type Result<T> = std::result::Result<T, QprocError>;

impl QprocError {
    /// CLI exit code for this error: 2 invalid law/assumptions, 3 cap or
    /// truncation failure, 4 convergence failure.
    pub fn exit_code(&self) -> i32 {
        use QprocError::*;
        match self {
            NotAProbabilityVector(_) | AssumptionViolated(_) | CriticalLawUnsupported
            | DegenerateSample | NonpositiveCRho(_) => 2,
            TruncationOverflow { .. } | CapTooSmall { .. } => 3,
            ConvergenceFailure(_) | DivisionByZero(_) => 4,
        }
    }
}
