use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A necessary uniqueness inequality does not hold (or the assembled
    /// mixing matrix is numerically rank deficient).
    #[error("identifiability violated for {receiver}: {inequality}")]
    Identifiability { receiver: String, inequality: String },

    #[error("reference symbol estimate for stream {stream} is numerically zero")]
    DegenerateScaling { stream: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI for error reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) | Error::ModeOutOfRange { .. } => "dimension",
            Error::Numerical(_) | Error::DegenerateScaling { .. } => "numerical",
            Error::Config(_) => "validation",
            Error::Identifiability { .. } => "identifiability",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}
