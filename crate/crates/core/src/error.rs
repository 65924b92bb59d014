use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("provider request failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },

    #[error("unusable model output: {message}")]
    DegenerateOutput { message: String, raw_output: String },

    #[error("assembled prompt is {total} chars, over the {limit}-char limit ({block_sizes})")]
    PromptTooLong {
        total: usize,
        limit: usize,
        block_sizes: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
