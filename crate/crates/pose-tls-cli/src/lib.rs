//! Command-line surface for the pose-tls library: file formats, the four
//! subcommands, and the numerical validation suite. The binary in
//! `main.rs` is a thin argument-parsing wrapper over this crate.

use std::fmt;

pub mod commands;
pub mod formats;
pub mod validate;

/// Errors surfaced to the command line. Each category carries the exit
/// status contract: 2 parse/schema, 3 degenerate geometry, 4 validation
/// failure, 5 I/O.
#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Degenerate(String),
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema: {m}"),
            CliError::Degenerate(m) => write!(f, "degenerate geometry: {m}"),
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pose_tls::Error> for CliError {
    fn from(e: pose_tls::Error) -> Self {
        match e {
            pose_tls::Error::InvalidInput(_) | pose_tls::Error::InvalidNoiseModel(_) => {
                CliError::Schema(e.to_string())
            }
            pose_tls::Error::DegenerateGeometry(_) | pose_tls::Error::SingularWeight { .. } => {
                CliError::Degenerate(e.to_string())
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
