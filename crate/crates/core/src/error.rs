use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature table is empty")]
    EmptyTable,
    #[error("feature table has an empty identifier at row {row}")]
    EmptyFeatureId { row: usize },
    #[error("duplicate feature identifier `{0}`")]
    DuplicateFeature(String),
    #[error("feature `{feature}` has a non-finite observation ({value})")]
    NonFiniteObservation { feature: String, value: f64 },

    #[error("null fit needs at least {needed} finite z-values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("central interval [{a}, {b}] holds only {n_central} z-values (need at least 10)")]
    DegenerateInterval { a: f64, b: f64, n_central: usize },
    #[error("null fit did not converge; best iterate mu={mu}, sigma={sigma}, loglik={log_likelihood}")]
    NoConvergence { mu: f64, sigma: f64, log_likelihood: f64 },
    #[error("refit of the denulled levels failed at d1={d1}: {source}")]
    RefitFailed {
        d1: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("exhaustive search supports at most {max} features, got {d}")]
    TooManyFeatures { d: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or unreadable input.
    Input,
    /// The numerics failed on otherwise valid input.
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EmptyTable
            | Error::EmptyFeatureId { .. }
            | Error::DuplicateFeature(_)
            | Error::NonFiniteObservation { .. }
            | Error::InvalidConfig(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Input,
            Error::InsufficientData { .. }
            | Error::DegenerateInterval { .. }
            | Error::NoConvergence { .. }
            | Error::RefitFailed { .. }
            | Error::Domain { .. }
            | Error::TooManyFeatures { .. } => ErrorKind::Numeric,
        }
    }

    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }
}
