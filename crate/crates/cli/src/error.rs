use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}\n\n{usage}")]
    Usage { message: String, usage: String },

    #[error("invalid value for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse config file {}: {message}", path.display())]
    ConfigFile { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] repeater_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Everything short of a failed check is a usage or configuration problem.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
