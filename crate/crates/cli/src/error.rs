use thiserror::Error;

/// CLI failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line (unknown flag, missing argument).
    #[error("usage: {0}")]
    Usage(String),

    /// Malformed input file or literal.
    #[error("parse error: {0}")]
    Parse(String),

    /// Well-formed input outside the documented range.
    #[error("range violation: {0}")]
    Range(String),

    /// A numerical routine failed to produce a result.
    #[error("module failure: {0}")]
    Module(String),

    /// A result was produced but a hard invariant check failed.
    #[error("invariant failure: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const PARSE: u8 = 3;
    pub const RANGE: u8 = 4;
    pub const MODULE: u8 = 5;
    pub const INVARIANT: u8 = 6;
    pub const IO: u8 = 7;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse(_) => exit::PARSE,
            CliError::Range(_) => exit::RANGE,
            CliError::Module(_) => exit::MODULE,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Io(_) => exit::IO,
        }
    }
}

impl From<youngflow::Error> for CliError {
    fn from(e: youngflow::Error) -> Self {
        use youngflow::Error as E;
        let msg = e.to_string();
        match e {
            E::Parse(inner) => CliError::Parse(inner),
            E::Csv(_) | E::Json(_) => CliError::Parse(msg),
            E::InvalidParameter(_)
            | E::DimensionMismatch(_)
            | E::YoungCondition { .. }
            | E::OffManifold { .. }
            | E::NotTangent(_) => CliError::Range(msg),
            E::ProjectionFailed { .. }
            | E::DegenerateFrame { .. }
            | E::NoAdmissibleFoliation(_)
            | E::Numerical(_) => CliError::Module(msg),
            E::InvariantViolation(_) => CliError::Invariant(msg),
            E::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
