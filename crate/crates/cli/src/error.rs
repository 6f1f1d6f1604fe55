use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] levy_area::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "cli.config",
            CliError::Library(e) => e.code(),
            CliError::Io(_) => "cli.io",
            CliError::Json(_) => "cli.json",
            CliError::Csv(_) => "cli.csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
