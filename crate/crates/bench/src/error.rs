use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing {0}")]
    Missing(&'static str),

    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid {field}: {reason}")]
    Field { field: String, reason: String },

    #[error(transparent)]
    Core(#[from] robustfl_core::Error),

    #[error(transparent)]
    Sim(#[from] robustfl_sim::Error),

    #[error("result absent: {}", .0.display())]
    ResultAbsent(PathBuf),

    #[error("{}:{line}: {reason}", path.display())]
    Csv {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("no results to evaluate")]
    NoResults,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
