use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the allocation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the range where the BER model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation; `key` names the offending setting.
    #[error("invalid value for `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    /// The exhaustive search space is too large to enumerate without an override.
    #[error(
        "exhaustive search over {num_subcarriers} subcarriers with b_max = {b_max} \
         spans 2^{log2_size:.1} bit vectors (limit 2^{limit}); pass --force to override"
    )]
    OracleTooLarge {
        num_subcarriers: usize,
        b_max: u32,
        log2_size: f64,
        limit: u32,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
