use std::io;

use thiserror::Error;

/// Errors produced by the clustering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has no nonzero entries")]
    ZeroVector,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: term ids must be strictly ascending ({prev} then {next})")]
    NonAscendingIndex { line: usize, prev: u32, next: u32 },
    #[error("input contains no vectors")]
    EmptyFile,
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("k = {k} exceeds the number of objects N = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("structured inverted file was built for a different invariance vector")]
    StructureMismatch,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
