use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// No finite SINR attains the requested rate.
    #[error("rate {rate} Mbit/s is not attainable (saturation {saturation} Mbit/s)")]
    UnattainableRate { rate: f64, saturation: f64 },

    #[error("invalid network instance: {0}")]
    InvalidInstance(String),

    #[error("box has zero extent in every dimension")]
    DegenerateBox,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
