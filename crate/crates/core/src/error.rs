use thiserror::Error;

pub type Result<T, E = KoopmanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KoopmanError {
    #[error("input shape error: {0}")]
    InputShape(String),

    #[error("data validation error: {0}")]
    DataValidation(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("missing output data: {0}")]
    MissingOutput(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("invalid JSON at {path}: {message}")]
    Json { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KoopmanError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::InputShape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Configuration(msg.into())
    }

    /// True for failures caused by the numbers rather than by the inputs
    /// being malformed.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::SingularSystem(_) | Self::Numerical(_) | Self::Divergence(_)
        )
    }
}
