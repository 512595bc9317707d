use owns_core::filters::FilterError;
use owns_core::marching::MarchError;
use owns_core::param_select::SelectError;
use owns_core::spectral::SpectralError;
use owns_core::system::SystemError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    March(#[from] MarchError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Machine-readable form printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::System(_) => "config",
            CliError::Select(SelectError::BadConfig(_)) => "config",
            CliError::Spectral(_) => "spectral",
            CliError::Select(_) => "select",
            CliError::Filter(_) => "filter",
            CliError::March(MarchError::Config(_)) => "config",
            CliError::March(_) => "march",
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "io" => 3,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport<'static> {
        ErrorReport { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() }
    }
}
