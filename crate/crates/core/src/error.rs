use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("{field} outside search space: {message}")]
    OutsideSpace { field: String, message: String },

    #[error("invalid merge plan: {0}")]
    InvalidPlan(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("budget cannot be met by any member of the space: {0}")]
    UnsatisfiableBudget(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{path}: {message}")]
    Syntax { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn outside(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::OutsideSpace {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-parsable category used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Invalid { .. } => "invalid",
            Error::OutsideSpace { .. } => "out-of-space",
            Error::InvalidPlan(_) => "merge-plan",
            Error::NonFinite(_) => "non-finite",
            Error::UnsatisfiableBudget(_) => "budget",
            Error::Empty(_) => "empty",
            Error::UnknownPreset(_) => "unknown-preset",
            Error::MissingFile(_) => "missing-file",
            Error::Syntax { .. } => "syntax",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code for the category; distinct per category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_) => 3,
            Error::Syntax { .. } => 4,
            Error::OutsideSpace { .. } => 5,
            Error::Invalid { .. } => 6,
            Error::UnknownPreset(_) => 7,
            Error::UnsatisfiableBudget(_) => 8,
            Error::Shape { .. } | Error::InvalidPlan(_) | Error::NonFinite(_) | Error::Empty(_) => 9,
            Error::Io(_) | Error::Csv(_) => 10,
        }
    }
}
