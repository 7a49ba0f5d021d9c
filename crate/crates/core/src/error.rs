use thiserror::Error;

/// Errors produced anywhere in the rate pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// An operation was called outside the domain where its formula is defined.
    #[error("{op}: input out of domain: {reason}")]
    Domain { op: &'static str, reason: String },

    /// A closed-form expression left its numerically valid regime.
    #[error("{op}: numerical regime violated: {reason}")]
    NumericalRegime { op: &'static str, reason: String },

    /// No positive key rate is reachable for the requested configuration.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// Malformed sweep or reproduction request.
    #[error("invalid request: {0}")]
    Request(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain { op, reason: reason.into() }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field, reason: reason.into() }
    }

    /// Short machine-readable tag used by the CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig { .. } => "invalid_config",
            Error::Domain { .. } => "domain",
            Error::NumericalRegime { .. } => "numerical_regime",
            Error::Infeasible(_) => "infeasible",
            Error::Request(_) => "request",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
