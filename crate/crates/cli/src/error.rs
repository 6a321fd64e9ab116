use std::fmt;
use std::io;
use std::path::PathBuf;

/// Process exit codes.
pub mod code {
    pub const IO: i32 = 1;
    pub const MISSING_INPUT: i32 = 2;
    pub const PARAMETER: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const COMPUTE: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    MissingInput(PathBuf),
    Parameter(String),
    /// An input disagrees with the checksum recorded in its manifest.
    Integrity(String),
    Lib(spectrank::Error),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use spectrank::Error as E;
        match self {
            CliError::MissingInput(_) => code::MISSING_INPUT,
            CliError::Parameter(_) => code::PARAMETER,
            CliError::Integrity(_) => code::FORMAT,
            CliError::Io(_) => code::IO,
            CliError::Lib(e) => match e {
                E::Io(_) => code::IO,
                E::Config(_) => code::PARAMETER,
                E::Parse { .. }
                | E::NodeOutOfRange { .. }
                | E::EmptyGraph
                | E::Dimension { .. }
                | E::BadMagic(_)
                | E::VersionMismatch { .. }
                | E::ChecksumMismatch { .. }
                | E::Truncated
                | E::Corrupt(_) => code::FORMAT,
                _ => code::COMPUTE,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissingInput(p) => write!(f, "input not found: {}", p.display()),
            CliError::Parameter(m) => write!(f, "invalid parameter: {m}"),
            CliError::Integrity(m) => write!(f, "integrity check failed: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<spectrank::Error> for CliError {
    fn from(e: spectrank::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(spectrank::Error::Corrupt(e.to_string()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn param(msg: impl Into<String>) -> CliError {
    CliError::Parameter(msg.into())
}
