use thiserror::Error;

/// Errors raised anywhere in the detection, simulation and validation stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or unusable data.
    #[error("input error: {0}")]
    Input(String),
    /// Parameters that are inconsistent with each other or with the data.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input that is valid in form but degenerate for the requested computation.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A postcondition the library relies on did not hold.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Self::Degenerate(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Self::Invariant(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) | Self::Degenerate(_) | Self::Io(_) => 2,
            Self::Config(_) => 3,
            Self::Invariant(_) => 4,
        }
    }

    /// Short machine-readable tag for reports.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Input(_) => "input",
            Self::Config(_) => "config",
            Self::Degenerate(_) => "degenerate",
            Self::Invariant(_) => "invariant",
            Self::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Self::Input(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Self::Input(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
