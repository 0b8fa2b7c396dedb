use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("integrator failed to reach accuracy {target:e} (achieved {achieved:e}) after {steps} steps")]
    Accuracy {
        target: f64,
        achieved: f64,
        steps: usize,
    },

    #[error("degenerate rank in {substep} substep: {detail}")]
    DegenerateRank {
        substep: &'static str,
        detail: String,
    },

    #[error("singular gap degenerates at slice {slice}: sigma_{index} = sigma_{next}", next = .index + 1)]
    GapDegenerate { slice: usize, index: usize },

    #[error("divergence regime: alpha + beta = {0} >= 1")]
    Divergent(f64),

    #[error("field is not affine: {0}")]
    NotAffine(&'static str),

    #[error("matrix file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn dims(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
