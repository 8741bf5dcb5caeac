use alloc::boxed::Box;
use alloc::string::String;

use crate::qp::QpStatus;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} is singular")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("column {0} has no finite samples")]
    EmptyColumn(usize),

    #[error("horizon of {requested} steps exceeds the {available} precomputed gains")]
    Horizon { requested: usize, available: usize },

    #[error("quadratic term is not positive semidefinite (min eigenvalue {0:e})")]
    NotConvex(f64),

    #[error("quadratic program is unbounded along variable {0}")]
    Unbounded(usize),

    #[error("inner QP at step {step} ended with status {status:?}: {diagnostic}")]
    QpFailed {
        step: usize,
        status: QpStatus,
        diagnostic: String,
    },

    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
