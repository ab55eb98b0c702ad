use std::io;

use vtank_core::mesh::MeshError;
use vtank_core::params::ParamError;
use vtank_core::query::QueryError;
use vtank_core::range::RangeError;
use vtank_core::solver::SolverError;

/// Failure classes shared by the API (status codes) and the CLI (exit codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Unauthenticated,
    NotAuthorized,
    NotFound,
    Conflict,
    Io,
    Solver,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("not authenticated")]
    Unauthenticated,
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("solver: {0}")]
    Solver(String),
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_) => ErrorKind::Validation,
            Error::Unauthenticated => ErrorKind::Unauthenticated,
            Error::NotAuthorized(_) => ErrorKind::NotAuthorized,
            Error::NotFound(_) => ErrorKind::NotFound,
            Error::Conflict(_) => ErrorKind::Conflict,
            Error::Io(_) => ErrorKind::Io,
            Error::Solver(_) => ErrorKind::Solver,
            Error::Internal(_) => ErrorKind::Internal,
        }
    }

    /// CLI exit code: 1 validation, 2 auth, 3 IO, 4 solver.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation | ErrorKind::Conflict => 1,
            ErrorKind::Unauthenticated | ErrorKind::NotAuthorized => 2,
            ErrorKind::Io | ErrorKind::NotFound => 3,
            ErrorKind::Solver | ErrorKind::Internal => 4,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Error::NotFound(what.into())
    }

    pub fn internal(msg: impl std::fmt::Display) -> Self {
        Error::Internal(msg.to_string())
    }
}

impl From<ParamError> for Error {
    fn from(e: ParamError) -> Self {
        Error::Validation(e.to_string())
    }
}

impl From<MeshError> for Error {
    fn from(e: MeshError) -> Self {
        Error::Validation(e.to_string())
    }
}

impl From<QueryError> for Error {
    fn from(e: QueryError) -> Self {
        Error::Validation(e.to_string())
    }
}

impl From<RangeError> for Error {
    fn from(e: RangeError) -> Self {
        Error::Validation(e.to_string())
    }
}

impl From<SolverError> for Error {
    fn from(e: SolverError) -> Self {
        Error::Solver(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(format!("json: {e}"))
    }
}
