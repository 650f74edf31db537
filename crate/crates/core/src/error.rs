use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function (e.g. a non-positive rate).
    #[error("domain error: {0}")]
    Domain(String),

    /// The data are valid but carry too little information for the estimator.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Input data failed validation. `line` is 1-based when it refers to a file.
    #[error("validation error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<u64>, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    /// Caller passed incompatible arguments.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular design: {0}")]
    Singular(String),

    /// Logistic MLE diverges (complete or quasi-complete separation).
    #[error("separation: {0}")]
    Separation(String),

    /// The likelihood keeps improving towards the boundary of the parameter space.
    #[error("boundary: {0}")]
    Boundary(String),

    #[error("no convergence after {iterations} iterations (last iterate {last:?})")]
    Iteration { iterations: usize, last: Vec<f64> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn at_line(line: u64, message: impl Into<String>) -> Self {
        Error::Validation {
            line: Some(line),
            message: message.into(),
        }
    }

    /// The error text without its category prefix.
    pub fn message(&self) -> String {
        match self {
            Error::Domain(m)
            | Error::DegenerateData(m)
            | Error::Schema(m)
            | Error::Usage(m)
            | Error::Singular(m)
            | Error::Separation(m)
            | Error::Boundary(m) => m.clone(),
            Error::Validation { line: Some(l), message } => format!("line {l}: {message}"),
            Error::Validation { line: None, message } => message.clone(),
            Error::Iteration { iterations, last } => {
                format!("no convergence after {iterations} iterations (last iterate {last:?})")
            }
            Error::Io { path, source } => format!("{}: {source}", path.display()),
            Error::Csv(e) => e.to_string(),
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateData(_) => "degenerate-data",
            Error::Validation { .. } => "validation",
            Error::Schema(_) => "schema",
            Error::Usage(_) => "usage",
            Error::Singular(_) => "singular",
            Error::Separation(_) => "separation",
            Error::Boundary(_) => "boundary",
            Error::Iteration { .. } => "iteration",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }
}
