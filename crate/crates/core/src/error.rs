use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: &'static str, reason: String },

    #[error("{operation} requires {required} gains")]
    GainKind {
        operation: &'static str,
        required: &'static str,
    },

    #[error("{operation} requires scalar gains M_i = m_i I")]
    NotScalar { operation: &'static str },

    #[error("{operation}: {reason}")]
    Precondition { operation: &'static str, reason: String },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("state norm {norm:e} exceeded the overflow guard at t = {t}")]
    Overflow { t: f64, norm: f64 },

    #[error("Monte Carlo trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for aborts raised by the overflow / finiteness guard.
    pub fn is_numerical_abort(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::Overflow { .. } => true,
            Error::Trial { source, .. } => source.is_numerical_abort(),
            _ => false,
        }
    }
}
