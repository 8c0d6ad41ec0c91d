use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cima_core::Error),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("bad value in column '{column}': {value}")]
    BadValue { column: String, value: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code: 2 for configuration or input problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::MissingColumn(_) | SimError::BadValue { .. } => 2,
            _ => 1,
        }
    }
}
