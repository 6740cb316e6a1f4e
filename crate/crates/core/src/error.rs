use thiserror::Error;

use crate::codec::CodecError;
use crate::model::IndexK;
use crate::vm::VmError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error("ensemble has no entry for index {0}")]
    MissingIndex(IndexK),
    #[error("index {0} out of range")]
    IndexRange(IndexK),
    #[error("invalid ensemble table: {0}")]
    InvalidTable(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("unknown registry name {0:?}")]
    UnknownName(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
