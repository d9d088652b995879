//! Noise statistics: corner-correlogram power spectrum estimation, whitening
//! filters, and white-noise variance estimation.
//!
//! Corner pixels (outside the inscribed disk of the image square) contain
//! essentially no particle signal. Their autocorrelation, radially averaged
//! and isotropically re-expanded, gives the 2D noise power spectrum; its
//! inverse square root is the whitening filter. PSD values are in per-pixel
//! variance units: a white stack of variance `s2` has a flat PSD equal to
//! `s2`, and the mean of the PSD over the grid is the pixel variance.

use ndarray::Array2;
use rayon::prelude::*;

use crate::ctf::RadialProfile;
use crate::image::{FftPlan, FrequencyGrid, ImageStack};
use crate::{CwfError, Result};

/// Relative floor applied to estimated PSDs so whitening gain stays bounded.
pub const PSD_FLOOR: f64 = 1e-6;

/// White or colored noise statistics attached to a dataset.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// White noise of the given per-pixel variance.
    White { sigma2: f64 },
    /// Colored noise: estimated radial PSD and the whitening profile
    /// `psd^{-1/2}`; after whitening the residual noise has unit variance.
    Colored {
        psd_radial: RadialProfile,
        whitening_radial: RadialProfile,
    },
}

impl NoiseModel {
    /// Noise variance seen by the estimator (after whitening for colored).
    pub fn sigma2(&self) -> f64 {
        match self {
            NoiseModel::White { sigma2 } => *sigma2,
            NoiseModel::Colored { .. } => 1.0,
        }
    }

    pub fn is_colored(&self) -> bool {
        matches!(self, NoiseModel::Colored { .. })
    }
}

/// Corner mask: pixels strictly outside the inscribed disk and outside the
/// particle disk, as four corner lobes.
fn corner_mask(l: usize, particle_radius: f64) -> Array2<f64> {
    let half = (l / 2) as f64;
    let cut = half.max(particle_radius);
    Array2::from_shape_fn((l, l), |(iy, ix)| {
        let x = ix as f64 - half;
        let y = iy as f64 - half;
        if (x * x + y * y).sqrt() > cut {
            1.0
        } else {
            0.0
        }
    })
}

fn check_corners(l: usize, particle_radius: f64) -> Result<()> {
    if particle_radius >= l as f64 / 2.0 * std::f64::consts::SQRT_2 {
        return Err(CwfError::NoCornerPixels(format!(
            "particle radius {particle_radius} leaves no corner pixels at side {l}"
        )));
    }
    if particle_radius >= l as f64 / 2.0 {
        return Err(CwfError::NoCornerPixels(format!(
            "particle radius {particle_radius} reaches the inscribed disk of side {l}"
        )));
    }
    Ok(())
}

/// Circular (periodic) autocorrelation `ac(d) = sum_x g(x) g(x+d)` in
/// unshifted layout, via two FFTs.
fn circular_autocorr(img: &Array2<f64>, plan: &FftPlan) -> Array2<f64> {
    let l = img.dim().0;
    let mut buf = img.mapv(|x| num_complex::Complex64::new(x, 0.0));
    plan_transform(plan, &mut buf, false);
    buf.mapv_inplace(|z| num_complex::Complex64::new(z.norm_sqr(), 0.0));
    plan_transform(plan, &mut buf, true);
    buf.mapv(|z| z.re * l as f64)
}

// FftPlan's raw transform without the centered-shift convention.
fn plan_transform(plan: &FftPlan, data: &mut Array2<num_complex::Complex64>, inverse: bool) {
    // reuse the public API by round-tripping through the shift-free helper
    crate::image::raw_fft2(plan, data, inverse);
}

/// Estimates the radial noise PSD from the corner pixels of a stack.
///
/// Per image the corner mean is removed, the masked circular
/// autocorrelation is accumulated, normalized per lag by the mask overlap,
/// radially averaged into 1-pixel bins, re-expanded isotropically over the
/// full lag grid, and Fourier transformed. The result is clamped at
/// `PSD_FLOOR` times its maximum.
pub fn estimate_psd_corners(stack: &ImageStack, particle_radius: f64) -> Result<RadialProfile> {
    let l = stack.side();
    check_corners(l, particle_radius)?;
    let mask = corner_mask(l, particle_radius);
    let n_corner: f64 = mask.sum();
    let plan = FftPlan::new(l);

    let mask_ac = circular_autocorr(&mask, &plan);

    // mean-removed, masked autocorrelation accumulated over images
    let acc: Array2<f64> = stack
        .data
        .outer_iter()
        .into_par_iter()
        .map(|img| {
            let mean = img
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m > 0.0)
                .map(|(v, _)| v)
                .sum::<f64>()
                / n_corner;
            let masked = Array2::from_shape_fn((l, l), |idx| (img[idx] - mean) * mask[idx]);
            circular_autocorr(&masked, &plan)
        })
        .reduce(
            || Array2::zeros((l, l)),
            |mut a, b| {
                a += &b;
                a
            },
        );
    let n = stack.len() as f64;

    // radial binning of lags at min-image distance, weighted by overlap
    let max_bin = ((l as f64 / 2.0) * std::f64::consts::SQRT_2).ceil() as usize + 1;
    let mut sums = vec![0.0f64; max_bin + 1];
    let mut weights = vec![0.0f64; max_bin + 1];
    let min_image = |d: usize| -> f64 {
        let d = d as isize;
        let l = l as isize;
        d.min(l - d) as f64
    };
    for dy in 0..l {
        for dx in 0..l {
            let w = mask_ac[(dy, dx)];
            if w <= 0.5 {
                continue; // no overlapping corner pixels at this lag
            }
            let r = (min_image(dx).powi(2) + min_image(dy).powi(2)).sqrt();
            let bin = r.round() as usize;
            sums[bin] += acc[(dy, dx)] / n; // per-image masked ac
            weights[bin] += w;
        }
    }
    let mut ac1d = vec![0.0f64; max_bin + 1];
    for i in 0..=max_bin {
        if weights[i] > 0.0 {
            ac1d[i] = sums[i] / weights[i];
        }
    }
    // fill any empty interior bins by linear interpolation
    for i in 1..max_bin {
        if weights[i] == 0.0 {
            let lo = (0..i).rev().find(|&j| weights[j] > 0.0);
            let hi = (i + 1..=max_bin).find(|&j| weights[j] > 0.0);
            if let (Some(a), Some(b)) = (lo, hi) {
                let t = (i - a) as f64 / (b - a) as f64;
                ac1d[i] = ac1d[a] * (1.0 - t) + ac1d[b] * t;
            }
        }
    }

    // isotropic re-expansion over the full lag grid and transform to a PSD.
    // The Gaussian lag window is sidelobe-free, which matters for the large
    // dynamic range of colored noise: taper sidelobes would leak the low-k
    // peak across the whole band. Width L/6 keeps the smoothing kernel at
    // about one frequency bin.
    let lag_sigma = l as f64 / 6.0;
    let taper = |r: f64| -> f64 { (-r * r / (2.0 * lag_sigma * lag_sigma)).exp() };
    let ac1d_interp = |r: f64| -> f64 {
        let i = r.floor() as usize;
        if i >= max_bin {
            return ac1d[max_bin];
        }
        let t = r - i as f64;
        ac1d[i] * (1.0 - t) + ac1d[i + 1] * t
    };
    let mut ac2d = Array2::from_shape_fn((l, l), |(dy, dx)| {
        let r = (min_image(dx).powi(2) + min_image(dy).powi(2)).sqrt();
        num_complex::Complex64::new(ac1d_interp(r) * taper(r), 0.0)
    });
    plan_transform(&plan, &mut ac2d, false);
    // with per-pair autocorrelation units, E|F_unitary|^2 = DFT(ac); the plan
    // already divided by L once
    let psd2d = ac2d.mapv(|z| z.re * l as f64);

    // radial average of the PSD over grid frequencies (1/L-wide bins)
    let grid = FrequencyGrid::new(l);
    let n_bins = ((l as f64 / 2.0) * std::f64::consts::SQRT_2).ceil() as usize + 1;
    let mut psums = vec![0.0f64; n_bins + 1];
    let mut pcounts = vec![0.0f64; n_bins + 1];
    let half = l / 2;
    for my in 0..l {
        for mx in 0..l {
            // unshifted PSD layout: frequency index (wrapped) matches lag grid
            let fy = ((my + half) % l) as isize - half as isize;
            let fx = ((mx + half) % l) as isize - half as isize;
            let r = ((fx * fx + fy * fy) as f64).sqrt();
            let bin = r.round() as usize;
            psums[bin] += psd2d[(my, mx)];
            pcounts[bin] += 1.0;
        }
    }
    let _ = grid;
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for i in 0..=n_bins {
        if pcounts[i] > 0.0 {
            radii.push(i as f64 / l as f64);
            values.push(psums[i] / pcounts[i]);
        }
    }
    // cover the exact grid corner radius so downstream interpolation is total
    let corner = std::f64::consts::SQRT_2 * 0.5 + 1e-9;
    if *radii.last().unwrap() < corner {
        radii.push(corner);
        values.push(*values.last().unwrap());
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    if !(max > 0.0) {
        // a zero-noise stack: keep a tiny flat floor so downstream division
        // stays defined
        let floor = 1e-300;
        for v in values.iter_mut() {
            *v = floor;
        }
        return RadialProfile::new(radii, values);
    }
    for v in values.iter_mut() {
        *v = v.max(PSD_FLOOR * max);
    }
    RadialProfile::new(radii, values)
}

/// Whitening profile `psd^{-1/2}`.
///
/// PSD units make the whitened noise variance 1 directly: the whitened PSD
/// is `psd_true / psd_est ~= 1` per bin and the pixel variance is its grid
/// mean.
pub fn build_whitening(psd: &RadialProfile) -> Result<RadialProfile> {
    if psd.values.iter().any(|&v| !(v > 0.0)) {
        return Err(CwfError::Domain(
            "PSD must be strictly positive to build a whitening filter".into(),
        ));
    }
    RadialProfile::new(
        psd.radii.clone(),
        psd.values.iter().map(|&v| 1.0 / v.sqrt()).collect(),
    )
}

/// Applies an isotropic whitening profile to every image (Fourier multiply).
pub fn whiten_stack(stack: &ImageStack, whitening: &RadialProfile) -> Result<ImageStack> {
    let grid = FrequencyGrid::new(stack.side());
    let mult = whitening.as_multiplier(&grid)?;
    crate::image::apply_fourier_multiplier(stack, &mult)
}

/// Mean-removed corner-pixel variance, pooled over the stack.
pub fn estimate_sigma2_white(stack: &ImageStack, particle_radius: f64) -> Result<f64> {
    let l = stack.side();
    check_corners(l, particle_radius)?;
    let mask = corner_mask(l, particle_radius);
    let n_corner: f64 = mask.sum();
    let total: f64 = stack
        .data
        .outer_iter()
        .into_par_iter()
        .map(|img| {
            let mean = img
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m > 0.0)
                .map(|(v, _)| v)
                .sum::<f64>()
                / n_corner;
            img.iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m > 0.0)
                .map(|(v, _)| (v - mean) * (v - mean))
                .sum::<f64>()
        })
        .sum();
    Ok(total / (n_corner * stack.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctf::{ctf_as_2d, CtfParams};
    use crate::image::apply_fourier_multiplier;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white_stack(n: usize, l: usize, sigma: f64, seed: u64) -> ImageStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array3::from_shape_fn((n, l, l), |_| sigma * rng.sample::<f64, _>(StandardNormal));
        ImageStack::ungrouped(data, 1.0).unwrap()
    }

    /// Colored stack with PSD proportional to 1/(1+k^2), k in cycles/image.
    fn colored_stack(n: usize, l: usize, seed: u64) -> ImageStack {
        let white = white_stack(n, l, 1.0, seed);
        let grid = FrequencyGrid::new(l);
        let mult = grid.radial_freq.mapv(|r| {
            let k = r * l as f64;
            1.0 / (1.0 + k * k).sqrt()
        });
        apply_fourier_multiplier(&white, &mult).unwrap()
    }

    #[test]
    fn white_noise_has_flat_psd_at_its_variance() {
        let sigma2: f64 = 3.0;
        let stack = white_stack(400, 64, sigma2.sqrt(), 1);
        let psd = estimate_psd_corners(&stack, 20.0).unwrap();
        for (&r, &v) in psd.radii.iter().zip(psd.values.iter()) {
            if r > 0.03 && r < 0.45 {
                assert!(
                    (v - sigma2).abs() < 0.1 * sigma2,
                    "PSD at {r}: {v}, expected ~{sigma2}"
                );
            }
        }
    }

    #[test]
    fn lorentzian_psd_recovered_proportionally() {
        let l = 64usize;
        let stack = colored_stack(600, l, 7);
        let psd = estimate_psd_corners(&stack, 20.0).unwrap();
        // compare shape over the mid band against 1/(1+k^2)
        let reference = |r: f64| {
            let k = r * l as f64;
            1.0 / (1.0 + k * k)
        };
        // anchor the proportionality constant mid-band
        let (mut num, mut den) = (0.0, 0.0);
        for (&r, &v) in psd.radii.iter().zip(psd.values.iter()) {
            if r >= 0.1 && r <= 0.35 {
                num += v;
                den += reference(r);
            }
        }
        let scale = num / den;
        for (&r, &v) in psd.radii.iter().zip(psd.values.iter()) {
            if r >= 0.1 && r <= 0.35 {
                let want = scale * reference(r);
                assert!(
                    (v - want).abs() < 0.15 * want,
                    "PSD at {r}: {v}, expected ~{want}"
                );
            }
        }
    }

    #[test]
    fn clean_disk_signal_has_negligible_corner_psd() {
        let l = 64;
        let half = (l / 2) as f64;
        let data = Array3::from_shape_fn((8, l, l), |(i, iy, ix)| {
            let x = ix as f64 - half;
            let y = iy as f64 - half;
            if (x * x + y * y).sqrt() < 20.0 {
                (i as f64 + 1.0) * (-((x * x + y * y)) / 50.0).exp()
            } else {
                0.0
            }
        });
        let stack = ImageStack::ungrouped(data, 1.0).unwrap();
        let psd = estimate_psd_corners(&stack, 20.0).unwrap();
        let signal_power = crate::metrics::mean_signal_power(&stack);
        let max_psd = psd.values.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max_psd < 1e-12 * signal_power.max(1e-300) + 1e-250);
    }

    #[test]
    fn whitening_is_inverse_sqrt_of_psd() {
        let radii: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let psd = RadialProfile::new(radii.clone(), vec![4.0; 20]).unwrap();
        let w = build_whitening(&psd).unwrap();
        for &v in &w.values {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        }
        // lorentzian shape inverts to sqrt growth
        let psd2 = RadialProfile::new(
            radii.clone(),
            radii.iter().map(|&r| 1.0 / (1.0 + r * r)).collect(),
        )
        .unwrap();
        let w2 = build_whitening(&psd2).unwrap();
        for (&r, &v) in w2.radii.iter().zip(w2.values.iter()) {
            assert_abs_diff_eq!(v, (1.0 + r * r).sqrt(), epsilon = 1e-12);
        }
        assert!(build_whitening(
            &RadialProfile::new(vec![0.0, 0.1], vec![1.0, 0.0]).unwrap()
        )
        .is_err());
    }

    #[test]
    fn unit_whitening_is_identity() {
        let stack = white_stack(3, 32, 1.0, 3);
        let radii: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        let ones = RadialProfile::new(radii, vec![1.0; 12]).unwrap();
        let out = whiten_stack(&stack, &ones).unwrap();
        for (a, b) in out.data.iter().zip(stack.data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn whitening_commutes_with_ctf() {
        let stack = white_stack(2, 32, 1.0, 4);
        let params = CtfParams {
            defocus_um: 2.0,
            voltage_kv: 300.0,
            cs_mm: 2.0,
            amplitude_contrast: 0.07,
            b_factor_a2: 10.0,
            pixel_size: 2.0,
        };
        let grid = FrequencyGrid::new(32);
        let ctf = ctf_as_2d(&params, &grid).unwrap();
        let radii: Vec<f64> = (0..24).map(|i| i as f64 / 24.0).collect();
        let w = RadialProfile::new(
            radii.clone(),
            radii.iter().map(|&r| (1.0 + r).sqrt()).collect(),
        )
        .unwrap();
        let a = apply_fourier_multiplier(&whiten_stack(&stack, &w).unwrap(), &ctf).unwrap();
        let b = whiten_stack(&apply_fourier_multiplier(&stack, &ctf).unwrap(), &w).unwrap();
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn whitened_colored_noise_is_flat_and_unit_variance() {
        let l = 64;
        let stack = colored_stack(500, l, 11);
        let psd = estimate_psd_corners(&stack, 20.0).unwrap();
        let w = build_whitening(&psd).unwrap();
        let whitened = whiten_stack(&stack, &w).unwrap();

        // flatness of the re-estimated PSD over the working band
        let psd2 = estimate_psd_corners(&whitened, 20.0).unwrap();
        let band: Vec<f64> = psd2
            .radii
            .iter()
            .zip(psd2.values.iter())
            .filter(|(&r, _)| (0.05..=0.45).contains(&r))
            .map(|(_, &v)| v)
            .collect();
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        for v in &band {
            assert!(
                (v - mean).abs() < 0.1 * mean,
                "whitened PSD bin {v} deviates from mean {mean}"
            );
        }

        // per-pixel variance ~ 1
        let var = estimate_sigma2_white(&whitened, 20.0).unwrap();
        assert!((var - 1.0).abs() < 0.05, "whitened variance {var}");
    }

    #[test]
    fn sigma2_estimation_concentrates() {
        let stack = white_stack(300, 64, 2.0f64.sqrt(), 21);
        let s2 = estimate_sigma2_white(&stack, 20.0).unwrap();
        assert!((s2 - 2.0).abs() < 0.1, "estimated {s2}");

        let zero = ImageStack::ungrouped(Array3::zeros((2, 16, 16)), 1.0).unwrap();
        assert_eq!(estimate_sigma2_white(&zero, 4.0).unwrap(), 0.0);

        // disk-confined signal plus unit noise in the corners
        let l = 64;
        let half = (l / 2) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = Array3::from_shape_fn((300, l, l), |(_, iy, ix)| {
            let x = ix as f64 - half;
            let y = iy as f64 - half;
            let signal = if (x * x + y * y).sqrt() < 24.0 { 5.0 } else { 0.0 };
            signal + rng.sample::<f64, _>(StandardNormal)
        });
        let stack = ImageStack::ungrouped(data, 1.0).unwrap();
        let s2 = estimate_sigma2_white(&stack, 24.0).unwrap();
        assert!((s2 - 1.0).abs() < 0.05, "estimated {s2}");
    }

    #[test]
    fn circular_autocorrelation_matches_direct_sum() {
        let l = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Array2::from_shape_fn((l, l), |_| rng.gen::<f64>() - 0.5);
        let plan = FftPlan::new(l);
        let ac = circular_autocorr(&img, &plan);
        for dy in 0..l {
            for dx in 0..l {
                let mut want = 0.0;
                for y in 0..l {
                    for x in 0..l {
                        want += img[(y, x)] * img[((y + dy) % l, (x + dx) % l)];
                    }
                }
                assert_abs_diff_eq!(ac[(dy, dx)], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn particle_radius_must_leave_corners() {
        let stack = white_stack(2, 32, 1.0, 5);
        assert!(matches!(
            estimate_psd_corners(&stack, 16.0),
            Err(CwfError::NoCornerPixels(_))
        ));
    }
}
