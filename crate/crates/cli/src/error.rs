use std::fmt;
use std::process::ExitCode;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an inconsistent configuration.
    Usage(String),
    /// Malformed polynomial, measure, ensemble or data file.
    Parse(String),
    /// The numerical pipeline failed or its checks did not pass.
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn parse(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Parse(format!("{context}: {err}"))
    }

    pub fn solver(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Solver(format!("{context}: {err}"))
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage error", m),
            CliError::Parse(m) => ("parse error", m),
            CliError::Solver(m) => ("solver error", m),
            CliError::Io(m) => ("i/o error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
