use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Container(#[from] csmri_io::IoError),
    #[error(transparent)]
    Core(#[from] csmri_core::CoreError),
    #[error("{path}: {detail}")]
    Config { path: PathBuf, detail: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid corpus config: {0}")]
    InvalidCorpus(String),
    #[error("{path}: malformed table: {detail}")]
    Table { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}
