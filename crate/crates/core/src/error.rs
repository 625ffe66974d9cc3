use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sampler produced a NaN approximation.
    #[error("sampler produced NaN at level {level}")]
    NanSample { level: u32 },

    /// Not enough usable levels to fit a rate.
    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}
