//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid mesh, grid or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A solve failed, produced non-finite values, or a step became singular.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
