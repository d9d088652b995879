//! Evaluation metrics: relative mean squared error and dataset SNR.

use ndarray::{ArrayView2, ArrayView3};

use crate::image::ImageStack;
use crate::{CwfError, Result};

/// Summary metrics of a denoising run.
#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    /// Mean over images of `||x - x_hat||^2 / ||x||^2`.
    pub relative_mse_images: f64,
    /// `||Sigma - Sigma_hat||_F^2 / ||Sigma||_F^2` when a covariance truth is known.
    pub relative_mse_cov: f64,
    /// Dataset signal-to-noise ratio.
    pub snr: f64,
}

/// `||truth - estimate||_F^2 / ||truth||_F^2` for any matching shapes.
pub fn relative_mse(estimate: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(CwfError::Dimension(format!(
            "shape mismatch {:?} vs {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let denom: f64 = truth.iter().map(|t| t * t).sum();
    if denom == 0.0 {
        return Err(CwfError::UndefinedMetric(
            "relative MSE undefined for zero truth".into(),
        ));
    }
    let num: f64 = estimate
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (t - e) * (t - e))
        .sum();
    Ok(num / denom)
}

/// Mean of per-image relative MSE over a stack, skipping images whose truth
/// is identically zero (e.g. injected pure-noise outliers).
pub fn mean_relative_mse_stack(estimate: ArrayView3<f64>, truth: ArrayView3<f64>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(CwfError::Dimension(format!(
            "stack shape mismatch {:?} vs {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (e, t) in estimate.outer_iter().zip(truth.outer_iter()) {
        match relative_mse(e, t) {
            Ok(v) => {
                total += v;
                counted += 1;
            }
            Err(CwfError::UndefinedMetric(_)) => continue,
            Err(other) => return Err(other),
        }
    }
    if counted == 0 {
        return Err(CwfError::UndefinedMetric(
            "no image with nonzero truth".into(),
        ));
    }
    Ok(total / counted as f64)
}

/// Dataset SNR of CTF-affected clean images against a noise variance.
///
/// Signal power is the mean-removed per-pixel variance of each clean image,
/// averaged over the whole stack; the result is one scalar per dataset.
pub fn snr_of_stack(clean_ctf_images: &ImageStack, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0) {
        return Err(CwfError::Domain(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    Ok(mean_signal_power(clean_ctf_images) / noise_variance)
}

/// Mean over images of the mean-removed per-pixel variance.
pub fn mean_signal_power(stack: &ImageStack) -> f64 {
    let n = stack.len() as f64;
    let npix = (stack.side() * stack.side()) as f64;
    let total: f64 = stack
        .data
        .outer_iter()
        .map(|img| {
            let mean = img.sum() / npix;
            img.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / npix
        })
        .sum();
    total / n
}
