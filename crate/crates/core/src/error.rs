use thiserror::Error;

use crate::store::{ObjectId, PageId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("object of {size} bytes does not fit a {capacity}-byte page")]
    OversizeObject { size: u32, capacity: u32 },

    #[error("object {0} not found")]
    NotFound(ObjectId),

    #[error("page {0} not found")]
    PageNotFound(PageId),

    #[error("object {from} references missing object {to}")]
    DanglingReference { from: ObjectId, to: ObjectId },

    #[error("object {0} is still referenced and cannot be deleted")]
    StillReferenced(ObjectId),

    #[error("object {0} appears more than once in the placement sequence")]
    DuplicateInProposal(ObjectId),

    #[error("dissimilarity is undefined when both access frequencies are zero")]
    UndefinedDissimilarity,

    #[error("resemblance is undefined for an empty proposal")]
    EmptyProposal,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
