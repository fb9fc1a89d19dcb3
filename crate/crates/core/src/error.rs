use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cache does not match network: {0}")]
    StaleCache(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("auxiliary {side} optimization diverged at step {step}")]
    AuxDiverged { side: AuxSide, step: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which auxiliary agent of a duality-gap estimate a failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxSide {
    /// The worst-case discriminator (max player).
    Discriminator,
    /// The worst-case generator (min player).
    Generator,
}

impl std::fmt::Display for AuxSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxSide::Discriminator => f.write_str("discriminator"),
            AuxSide::Generator => f.write_str("generator"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
