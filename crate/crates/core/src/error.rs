use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown code: {0}")]
    UnknownCode(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid restriction: {0}")]
    Spec(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "kernel is not certified stable: column-sum bound {bound}, spectral radius estimate {estimate:?}, offending columns {offending:?}"
    )]
    Stability {
        bound: f64,
        estimate: Option<f64>,
        offending: Vec<usize>,
    },

    #[error("kernel has not been certified; call certify() before solving")]
    Uncertified,

    #[error("total dependence: supplier {label} (column {column}) sends share {psi} of its deliveries to the target")]
    TotalDependence {
        column: usize,
        label: String,
        psi: f64,
    },

    #[error("solver did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("dense oracle refused: N = {n} exceeds the limit of {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Short machine-readable name used in failure listings.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::UnknownCode(_) => "unknown_code",
            Error::Argument(_) => "argument",
            Error::Spec(_) => "spec",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Stability { .. } => "stability",
            Error::Uncertified => "uncertified",
            Error::TotalDependence { .. } => "total_dependence",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SizeGuard { .. } => "size_guard",
            Error::DegenerateClass(_) => "degenerate_class",
            Error::Usage(_) => "usage",
        }
    }

    /// Process exit status for the command-line tool.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 2  | unreadable, malformed or inconsistent input |
    /// | 3  | kernel not certified stable, or solver failure |
    /// | 4  | total dependence of a restricted supplier on the target |
    /// | 5  | unknown country or sector code, invalid restriction |
    /// | 6  | no positive score to normalize or rank |
    /// | 64 | usage error |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::DimensionMismatch { .. } => 2,
            Error::Stability { .. }
            | Error::Uncertified
            | Error::NonConvergence { .. } => 3,
            Error::TotalDependence { .. } => 4,
            Error::UnknownCode(_) | Error::Spec(_) => 5,
            Error::DegenerateClass(_) => 6,
            Error::Argument(_) | Error::Usage(_) | Error::SizeGuard { .. } => 64,
        }
    }
}
