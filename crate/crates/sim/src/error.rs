use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] robustfl_core::Error),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{path}: {reason}")]
    Idx { path: String, reason: String },

    #[error("cannot give {clients} clients a non-empty share of {samples} samples")]
    TooFewSamples { clients: usize, samples: usize },

    #[error("invalid setting {name}: {reason}")]
    Setting { name: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
