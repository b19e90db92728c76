use thiserror::Error;

use crate::dataio::DataError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("exact enumeration limit: {players} players exceeds the maximum of {limit}")]
    EnumerationLimit { players: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
