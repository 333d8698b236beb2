use std::fmt;

use thiserror::Error;

use crate::mip::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    SchemaVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("invalid instance: {}", ViolationList(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),

    #[error("LP relaxation is unbounded")]
    Unbounded,

    #[error("root LP is not optimal (status {0})")]
    RootNotOptimal(String),

    #[error("instance has no integer variables")]
    EmptyIntegerSet,

    #[error("candidate set is empty")]
    EmptyCandidate,

    #[error("instance id mismatch: expected {expected}, found {found}")]
    InstanceMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("missing run: {0}")]
    MissingRun(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        if err.is_io() {
            return Error::Io(err.into());
        }
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
