use isac_core::IsacError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] IsacError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) => core_exit_code(e),
            CliError::Io(_) => 2,
        }
    }
}

fn core_exit_code(e: &IsacError) -> i32 {
    match e {
        IsacError::InvalidConfig(_) | IsacError::InvalidArgument(_) => 1,
        IsacError::AtOmega { source, .. } => core_exit_code(source),
        _ => 2,
    }
}

pub type CliResult<T> = Result<T, CliError>;
