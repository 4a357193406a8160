use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] passquant::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
