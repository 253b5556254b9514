use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum XiError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported order {order} for {what}")]
    UnsupportedOrder { what: &'static str, order: usize },

    #[error("quadrature did not converge (best {best}, error estimate {error:.3e}, {evaluations} evaluations)")]
    NonConvergence {
        best: Complex64,
        error: f64,
        evaluations: usize,
    },

    #[error("singular matrix (det = {0})")]
    Singular(Complex64),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, XiError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(XiError::Domain(msg.into()))
}
