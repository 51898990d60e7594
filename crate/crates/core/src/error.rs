use std::path::PathBuf;

use thiserror::Error;

use crate::validate::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: wrong shapes, non-binary entries, bad parameters.
    #[error("input error: {0}")]
    Input(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("degenerate: no internal nodes")]
    Degenerate,

    #[error("not a structure matrix: {}", format_violations(.0))]
    InvalidStructure(Vec<Violation>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("unknown format version `{0}`")]
    Version(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("backend disagreement: {0}")]
    Disagreement(String),
}

impl Error {
    /// True for errors caused by bad input rather than a domain failure.
    ///
    /// The CLI maps these to exit code 2 and everything else to 1.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Schema(_)
                | Error::Config(_)
                | Error::Dimension(_)
                | Error::Io { .. }
                | Error::Malformed(_)
                | Error::Version(_)
                | Error::Row { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
