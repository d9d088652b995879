//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the CWF pipeline stages.
#[derive(Debug, Error)]
pub enum CwfError {
    /// Shapes of inputs do not match what the operation requires.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numeric argument is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A metric or statistic is undefined for the given input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A linear system is singular and cannot be solved as requested.
    #[error("singular system: {0}")]
    Singular(String),

    /// A stack has no corner pixels outside the particle disk.
    #[error("no corner pixels: {0}")]
    NoCornerPixels(String),

    /// Numerical conditioning failure with diagnostics.
    #[error("conditioning failure: {0}")]
    Conditioning(String),
}
