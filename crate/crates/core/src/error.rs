use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in energy term `{term}`")]
    NumericOverflow { term: &'static str },

    #[error("{operation}: precondition failed: {reason}")]
    Precondition {
        operation: &'static str,
        reason: String,
    },

    #[error("SCF did not converge after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("quadrature accuracy not reached: {0}")]
    Accuracy(String),

    #[error("linear solver failed: {reason}")]
    LinearSolver { reason: String, residuals: Vec<f64> },

    #[error("loss of coercivity: {0}")]
    Coercivity(String),

    #[error("coefficient outside chart domain: {0}")]
    Domain(String),

    #[error("requested order {requested} exceeds the configured cap {cap}")]
    OrderCap { requested: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn precondition(operation: &'static str, reason: impl Into<String>) -> Self {
        Error::Precondition {
            operation,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Dimension(_) => "dimension",
            Error::NumericOverflow { .. } => "numeric_overflow",
            Error::Precondition { .. } => "precondition",
            Error::Convergence { .. } => "convergence",
            Error::Consistency(_) => "consistency",
            Error::Accuracy(_) => "accuracy",
            Error::LinearSolver { .. } => "linear_solver",
            Error::Coercivity(_) => "coercivity",
            Error::Domain(_) => "domain",
            Error::OrderCap { .. } => "order_cap",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
