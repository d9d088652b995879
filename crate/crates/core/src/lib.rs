//! Covariance Wiener filtering (CWF) for CTF-corrupted particle images.
//!
//! The pipeline estimates the mean and the block-diagonal covariance of the
//! underlying clean images directly from noisy, CTF-filtered observations,
//! then deconvolves each image with the linear MMSE (Wiener) filter built
//! from that covariance. Supporting stages: noise whitening from corner
//! correlograms, a steerable Fourier-Bessel expansion that block-diagonalizes
//! everything by angular frequency, Marchenko-Pastur rank detection with
//! operator-norm eigenvalue shrinkage, baseline restorations (phase flipping,
//! traditional Wiener filtering), a contrast-based outlier classifier, and a
//! synthetic-data simulator for closed-loop validation.

pub mod ctf;
pub mod fb;
pub mod error;
pub mod image;
pub mod noise;
pub mod metrics;

pub use error::CwfError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CwfError>;
