//! Error reporting: every failure maps to a distinct exit code and is
//! printed to stderr as one JSON object.

use std::path::Path;
use std::process::ExitCode;

use backdoor_core::Error;
use serde::Serialize;

pub const EXIT_FAILURE: u8 = 1;
// clap exits with 2 on usage errors.
pub const EXIT_IO: u8 = 3;
pub const EXIT_SCHEMA: u8 = 4;
pub const EXIT_PARSE: u8 = 5;
pub const EXIT_INVALID: u8 = 6;
pub const EXIT_CONFLICT: u8 = 7;

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub exit_code: u8,
}

impl Failure {
    pub fn new(kind: &'static str, exit_code: u8, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            path: None,
            exit_code,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new("invalid_input", EXIT_INVALID, message)
    }

    pub fn conflict(path: &Path) -> Self {
        Self::new(
            "output_conflict",
            EXIT_CONFLICT,
            "output exists with different content (use --force to overwrite)",
        )
        .at(path)
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }

    pub fn report(&self) -> ExitCode {
        let line = serde_json::to_string(&serde_json::json!({ "error": self })).expect("serializable");
        eprintln!("{line}");
        ExitCode::from(self.exit_code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match &e {
            Error::Io(_) => ("io", EXIT_IO),
            Error::MissingRun(_) => ("missing_run", EXIT_IO),
            Error::SchemaVersion { .. } => ("schema_version", EXIT_SCHEMA),
            Error::Parse { .. } => ("parse", EXIT_PARSE),
            Error::InvalidInstance(_)
            | Error::InvalidConfig(_)
            | Error::InstanceMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::EmptyInput(_)
            | Error::EmptyIntegerSet
            | Error::EmptyCandidate => ("invalid_input", EXIT_INVALID),
            Error::IterationLimit(_) | Error::Unbounded | Error::RootNotOptimal(_) => ("solver", EXIT_FAILURE),
            Error::NonFiniteLoss(_) => ("training", EXIT_FAILURE),
        };
        Self::new(kind, code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", EXIT_IO, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Attaches a path to errors from file operations.
pub trait AtPath<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T, E: Into<Failure>> AtPath<T> for Result<T, E> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| e.into().at(path))
    }
}
