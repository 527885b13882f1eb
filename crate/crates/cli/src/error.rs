use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys, parameter values or input data.
    #[error("{0}")]
    Validation(String),

    /// Numerical failure during a run (divergence, degenerate fit, ...).
    #[error("{0}")]
    Runtime(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl From<qsde::Error> for CliError {
    fn from(e: qsde::Error) -> Self {
        use qsde::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_)
            | E::Format(_)
            | E::NonMonotoneTimestamps { .. }
            | E::NonPositivePrice { .. }
            | E::Empty(_) => CliError::Validation(msg),
            E::Domain(_)
            | E::Divergence { .. }
            | E::TooShort(_)
            | E::InsufficientBins { .. }
            | E::ZeroVariance(_) => CliError::Runtime(msg),
            E::Io(_) => CliError::Io(msg),
            E::Csv(ref c) if c.is_io_error() => CliError::Io(msg),
            E::Csv(_) => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
