use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The document is not well-formed TOML or does not match the schema.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    /// A well-formed document violates an invariant.
    #[error("validation error in {field}: {message}")]
    Validation { field: String, message: String },

    #[error("experiment failed: {0}")]
    Experiment(#[from] levy_sync::Error),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot plot an empty report")]
    EmptyReport,
}
