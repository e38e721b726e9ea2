use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("cannot coarsen level {level} in {direction}: {count} elements cannot be halved")]
    Coarsening {
        level: usize,
        direction: &'static str,
        count: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero diagonal entry in row {row}; Jacobi preconditioner undefined")]
    ZeroDiagonal { row: usize },

    #[error("{solver} broke down after {iterations} iterations: {reason}")]
    Breakdown {
        solver: &'static str,
        iterations: usize,
        reason: String,
    },

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("stale state: {0}")]
    Stale(&'static str),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Mesh(_) | Error::Coarsening { .. } | Error::Config(_) | Error::InvalidArgument(_) => {
                "config"
            }
            Error::Dimension { .. } => "dimension",
            Error::ZeroDiagonal { .. } | Error::Breakdown { .. } | Error::NotConverged { .. } => "solver",
            Error::Stale(_) => "state",
            Error::Io { .. } => "io",
            Error::Json(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
