use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config or parameters; nothing was run.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The run started and a solver or estimator failed.
    #[error("runtime error: {0}")]
    Runtime(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }

    /// Maps a core error raised while checking inputs.
    pub(crate) fn validation(e: smtde_core::Error) -> Self {
        match e {
            smtde_core::Error::InvalidInput(msg) => CliError::Validation(msg),
            other => CliError::Validation(other.to_string()),
        }
    }

    pub(crate) fn runtime(e: smtde_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
