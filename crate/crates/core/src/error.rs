//! Crate-level error type shared by the counting pipelines.

use thiserror::Error;

use crate::cqeval::QueryError;
use crate::ghw::GhdError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Ghd(#[from] GhdError),
    #[error("guard exceeded: {what} is {found}, limit is {limit}")]
    Guard {
        what: &'static str,
        limit: usize,
        found: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by a resource guard rather than bad input.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::Guard { .. })
    }

    pub(crate) fn guard(what: &'static str, limit: usize, found: usize) -> Self {
        Error::Guard { what, limit, found }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
