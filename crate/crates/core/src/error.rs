use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label mismatch: observation {observation} vs marker {marker}")]
    LabelMismatch { observation: u32, marker: u32 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("timestamp mismatch: {0} s vs {1} s")]
    TimestampMismatch(f64, f64),

    #[error("label baseline {measured:.3} m outside gate around {nominal:.3} m")]
    BaselineGate { measured: f64, nominal: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("log error: {0}")]
    Log(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
