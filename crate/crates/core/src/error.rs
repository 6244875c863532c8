use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("eligibility violation for unit {unit} at time {time}: {message}")]
    EligibilityViolation {
        unit: String,
        time: usize,
        message: String,
    },

    #[error("presence violation for unit {unit} at time {time}: {message}")]
    PresenceViolation {
        unit: String,
        time: usize,
        message: String,
    },

    #[error("duplicate key: unit {unit} appears twice at time {time}")]
    DuplicateKey { unit: String, time: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("shape mismatch: expected {expected} columns, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("empty risk set at time {time} for history '{history}': {context}")]
    EmptyRiskSet {
        time: usize,
        history: String,
        context: String,
    },

    #[error("degenerate denominator ({value:e}) in {context}")]
    DegenerateDenominator { value: f64, context: String },

    #[error("too many failed bootstrap replicates: {failed} of {total}")]
    TooManyFailedReplicates { failed: usize, total: usize },

    #[error("overlap violation: {0}")]
    OverlapViolation(String),

    #[error("identity check failed: {0}")]
    Inconsistent(String),
}

impl Error {
    /// Validation errors concern the inputs (data, schema, flags); everything
    /// else is raised while fitting or estimating.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedRow { .. }
                | Error::EligibilityViolation { .. }
                | Error::PresenceViolation { .. }
                | Error::DuplicateKey { .. }
                | Error::Schema(_)
                | Error::Parse(_)
                | Error::InvalidConfig(_)
        )
    }

    /// Short variant name, used by the CLI and the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::EligibilityViolation { .. } => "EligibilityViolation",
            Error::PresenceViolation { .. } => "PresenceViolation",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::Schema(_) => "Schema",
            Error::Parse(_) => "Parse",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::EmptyRiskSet { .. } => "EmptyRiskSet",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::TooManyFailedReplicates { .. } => "TooManyFailedReplicates",
            Error::OverlapViolation(_) => "OverlapViolation",
            Error::Inconsistent(_) => "Inconsistent",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
