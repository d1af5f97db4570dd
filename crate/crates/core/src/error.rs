use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by graph construction, sampling, simulation and statistics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("budget exceeded: {what} needs {requested}, limit is {limit}")]
    BudgetExceeded {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("{what} reaches the truncation boundary (center {center}, radius {radius})")]
    BoundaryContact {
        what: &'static str,
        center: usize,
        radius: usize,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("vertex {0} is out of range")]
    VertexOutOfRange(usize),

    #[error("vertex {0} is isolated (all incident conductances are zero)")]
    IsolatedVertex(usize),

    #[error("vertex {0} is not in the base-point cluster")]
    NotInCluster(usize),

    #[error("{0} is outside the domain of the function (argument must exceed e)")]
    Domain(f64),

    #[error("nonpositive lambda_k at k = {0:?}")]
    NonpositiveLambda(Vec<usize>),

    #[error("empty fit domain: {0}")]
    EmptyDomain(String),

    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("every path was discarded at the truncation boundary ({0} paths)")]
    AllDiscarded(usize),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("config error at line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad class of the error, used for process exit codes and the C ABI.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::VertexOutOfRange(_)
            | Error::Domain(_)
            | Error::NonpositiveLambda(_)
            | Error::ConfigSyntax { .. } => ErrorKind::Validation,
            Error::BudgetExceeded { .. } | Error::BoundaryContact { .. } => ErrorKind::Budget,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Budget,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Budget => 3,
            ErrorKind::Runtime => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Budget => "budget",
            ErrorKind::Runtime => "runtime",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
