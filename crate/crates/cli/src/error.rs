use std::fmt;
use std::path::Path;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Numeric(String),
    Assertion(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Assertion(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "invalid configuration: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<qsmooth::Error> for CliError {
    fn from(e: qsmooth::Error) -> Self {
        use qsmooth::Error as E;
        match e {
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            e => CliError::Schema(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        match e.classify() {
            serde_json::error::Category::Io => CliError::Io(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
