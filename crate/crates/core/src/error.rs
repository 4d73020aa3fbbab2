use thiserror::Error;

/// Errors raised by the arithmetic, reduction, evaluation and counting layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("operands live in different rings: {0}")]
    SpecMismatch(String),
    #[error("element is not a unit: {0}")]
    NonUnit(String),
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("polynomial is not integral: {0}")]
    NotIntegral(String),
    #[error("quadratic part is degenerate: {0}")]
    Degenerate(String),
    #[error("density series does not converge: {0}")]
    NonConvergent(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("work budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Short variant name, used in machine-readable reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidField(_) => "InvalidField",
            Error::SpecMismatch(_) => "SpecMismatch",
            Error::NonUnit(_) => "NonUnit",
            Error::PrecisionExhausted(_) => "PrecisionExhausted",
            Error::NotIntegral(_) => "NotIntegral",
            Error::Degenerate(_) => "Degenerate",
            Error::NonConvergent(_) => "NonConvergent",
            Error::InternalInconsistency(_) => "InternalInconsistency",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
