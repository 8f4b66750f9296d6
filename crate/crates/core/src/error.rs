use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("lifting produced unphysical coverages (clamp magnitude {magnitude:.3e} exceeds {limit:.3e})")]
    Unliftable { magnitude: f64, limit: f64 },

    #[error("propensities are all zero (exhausted system)")]
    Exhausted,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// everything that went wrong while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
