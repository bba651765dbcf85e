use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tpg_core::Error),
    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path} is locked by another command (remove {path} if no command is running)")]
    Locked { path: PathBuf },
    #[error("missing checkpoint for variant(s) {}: looked for {}", .variants.join(", "), .looked_for.display())]
    MissingCheckpoints { variants: Vec<String>, looked_for: PathBuf },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Core(tpg_core::Error::Io {
        path: path.into(),
        source,
    })
}

pub(crate) fn csv_err(path: impl Into<PathBuf>, e: csv::Error) -> CliError {
    CliError::Core(tpg_core::Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })
}
