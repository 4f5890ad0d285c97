use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid config: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("bad input: {0}")]
    Input(String),

    /// A snapshot was diffed against a database it was not taken from.
    #[error("snapshot lineage mismatch: {0}")]
    Lineage(String),

    #[error("training needs at least 2 full epochs of {epoch_size} calls, got {calls} calls")]
    TooShort { calls: usize, epoch_size: usize },

    #[error("model file: {section}: {reason}")]
    Model { section: &'static str, reason: String },

    #[error("evaluation: {0}")]
    Alignment(String),
}

impl Error {
    pub(crate) fn model(section: &'static str, reason: impl Into<String>) -> Self {
        Error::Model {
            section,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
