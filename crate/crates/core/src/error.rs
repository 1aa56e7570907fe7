use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants map onto the CLI's exit-code categories: configuration
/// problems, model-file problems, numerical failures and misuse of the API.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical error in layer {layer}: {detail}")]
    Numerical { layer: usize, detail: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate codeword for message {message}")]
    DegenerateCodeword { message: usize },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numerical(layer: usize, detail: impl Into<String>) -> Self {
        Error::Numerical {
            layer,
            detail: detail.into(),
        }
    }

    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Numerical { .. } | Error::Diverged(_) | Error::DegenerateCodeword { .. } => {
                "numerical"
            }
            Error::ModelFile(_) => "model-file",
            Error::Io(_) => "io",
        }
    }
}
