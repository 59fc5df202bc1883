use thiserror::Error;

/// Errors raised by the estimators, simulators and I/O layers.
///
/// The variants are grouped by the exit code the command-line front end
/// reports for them: parameter and usage problems, bad or insufficient
/// data, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Short machine-readable category used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Domain(_) => "domain",
            Error::Estimation(_) => "estimation",
            Error::Numerical(_) => "numerical",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
