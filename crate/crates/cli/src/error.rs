use thiserror::Error;

/// Failures of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: missing files, schema errors, unusable images.
    #[error("{0}")]
    Input(String),

    /// The data did not support learning or scoring a template.
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<aot_core::Error> for CliError {
    fn from(e: aot_core::Error) -> Self {
        match e {
            aot_core::Error::DegenerateTemplate(_) | aot_core::Error::Saturation { .. } => {
                CliError::Degenerate(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
