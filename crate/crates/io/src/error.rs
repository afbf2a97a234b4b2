use std::path::PathBuf;

use csmri_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: container format error: {source}")]
    Container { path: PathBuf, source: hdf5::Error },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: missing dataset {name:?}")]
    MissingDataset { path: PathBuf, name: String },

    #[error("{path}: missing attribute {name:?}")]
    MissingAttribute { path: PathBuf, name: String },

    #[error("{path}: attribute {name:?}: {detail}")]
    AttributeType { path: PathBuf, name: String, detail: String },

    #[error("{path}: dataset {name:?} has shape {found:?}, expected {expected}")]
    ShapeMismatch { path: PathBuf, name: String, expected: String, found: Vec<usize> },

    #[error("{path}: invalid record: {reason}")]
    InvalidRecord { path: PathBuf, reason: String },

    #[error("{path}: header/data mismatch: {detail}")]
    CflMismatch { path: PathBuf, detail: String },

    #[error("{path}: line {line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },

    #[error("duplicate volume id {0:?}")]
    DuplicateId(String),

    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, IoError>;
