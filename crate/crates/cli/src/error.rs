use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DIVERGENCE: u8 = 3;
    pub const RESOURCE_LIMIT: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] symloss::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        use symloss::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(E::Divergence { .. }) => exit::DIVERGENCE,
            CliError::Core(E::ResourceLimit(_)) => exit::RESOURCE_LIMIT,
            CliError::Core(E::InvalidParameter(_) | E::InvalidInput(_) | E::UnsupportedLoss(_)) => exit::CONFIG,
            CliError::Core(E::Format(_) | E::Length(_) | E::Io(_)) => exit::CONFIG,
            _ => exit::CHECK_FAILED,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
