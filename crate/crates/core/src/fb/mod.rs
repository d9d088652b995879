//! Steerable Fourier-Bessel basis on a band-limited disk.
//!
//! Images are expanded as `sum_{k,q} a_{k,q} psi_{k,q}` where
//! `psi_{k,q}(xi, theta) = N_{k,q} J_k(R_{k,q} xi / c) exp(i k theta)` on the
//! Fourier disk `xi <= c`. In-plane image rotation acts diagonally per
//! angular frequency `k`, so covariances of rotationally invariant ensembles
//! and all radially isotropic operators (CTF, whitening) are block diagonal
//! in this basis.

pub mod bessel;
mod sampler;

mod basis;

pub use basis::{BlockOperator, FbBasis, FbCoeffs};
pub use sampler::PolarSampler;
