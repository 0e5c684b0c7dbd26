use std::path::PathBuf;

/// Errors raised by the reservoir, training, and analysis layers.
///
/// The variants map onto the process exit codes of the command-line tool:
/// input problems, numerical failures, and a failed edge bracket are kept
/// apart so callers can react to each differently.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("parse error in {source_name} at row {row}, column {column}: {message}")]
    Parse {
        source_name: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("{0} is not applicable: {1}")]
    NotApplicable(&'static str, String),

    #[error(
        "no sign change of the conditional exponent in [{rho_lo}, {rho_hi}] \
         (CLE({rho_lo}) = {cle_lo:.6}, CLE({rho_hi}) = {cle_hi:.6}); widen the bracket"
    )]
    Bracket {
        rho_lo: f64,
        rho_hi: f64,
        cle_lo: f64,
        cle_hi: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers themselves rather than by the request.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Solver(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
