//! Image containers, unitary centered Fourier transforms, and frequency-grid
//! geometry.
//!
//! Conventions used everywhere downstream:
//! - images are square, `L` even, pixel `(iy, ix)` sits at spatial coordinate
//!   `(y, x) = (iy - L/2, ix - L/2)` in pixel units;
//! - spectra are centered, DC at index `(L/2, L/2)`, bin `(my, mx)` at
//!   frequency `(v, u) = ((my - L/2)/L, (mx - L/2)/L)` in cycles/pixel;
//! - `fft2`/`ifft2` are unitary (a factor `1/L` in each direction), so white
//!   noise keeps its variance across domains.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::sync::Arc;

use crate::{CwfError, Result};

/// A stack of `n` real-space images of size `L x L`.
#[derive(Debug, Clone)]
pub struct ImageStack {
    /// Pixel data, shape `(n, L, L)`, axes `(image, y, x)`.
    pub data: Array3<f64>,
    /// Pixel size in Angstrom per pixel.
    pub pixel_size: f64,
    /// Per-image defocus-group assignment.
    pub group_id: Vec<usize>,
}

impl ImageStack {
    /// Wraps pixel data into a stack, checking the side and size invariants.
    pub fn new(data: Array3<f64>, pixel_size: f64, group_id: Vec<usize>) -> Result<Self> {
        let (n, h, w) = data.dim();
        if n == 0 {
            return Err(CwfError::Dimension("empty stack (n = 0)".into()));
        }
        if h != w {
            return Err(CwfError::Dimension(format!("non-square images {h}x{w}")));
        }
        if h < 8 || h % 2 != 0 {
            return Err(CwfError::Dimension(format!(
                "side must be even and >= 8, got {h}"
            )));
        }
        if !(pixel_size > 0.0) {
            return Err(CwfError::Domain(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if group_id.len() != n {
            return Err(CwfError::Dimension(format!(
                "group assignment has {} entries for {} images",
                group_id.len(),
                n
            )));
        }
        Ok(Self { data, pixel_size, group_id })
    }

    /// All images assigned to group 0.
    pub fn ungrouped(data: Array3<f64>, pixel_size: f64) -> Result<Self> {
        let n = data.dim().0;
        Self::new(data, pixel_size, vec![0; n])
    }

    /// Number of images.
    pub fn len(&self) -> usize {
        self.data.dim().0
    }

    /// True when the stack holds no images (cannot happen for a validated stack).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image side length `L`.
    pub fn side(&self) -> usize {
        self.data.dim().1
    }

    /// Checks that every group id references one of `n_groups` groups.
    pub fn validate_groups(&self, n_groups: usize) -> Result<()> {
        match self.group_id.iter().find(|&&g| g >= n_groups) {
            Some(&g) => Err(CwfError::Dimension(format!(
                "group id {g} out of range for {n_groups} groups"
            ))),
            None => Ok(()),
        }
    }
}

/// A centered complex spectrum of a single image.
#[derive(Debug, Clone)]
pub struct FourierImage {
    /// Complex bins, shape `(L, L)`, DC at `(L/2, L/2)`.
    pub data: Array2<Complex64>,
}

impl FourierImage {
    /// Side length `L`.
    pub fn side(&self) -> usize {
        self.data.dim().0
    }

    /// Largest deviation from the conjugate symmetry of a real image's
    /// spectrum, relative to the spectrum norm.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let l = self.side();
        let norm = self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for my in 0..l {
            for mx in 0..l {
                // mirror of centered index i is (l - i) mod l; the -Nyquist
                // row/column maps onto itself.
                let ry = (l - my) % l;
                let rx = (l - mx) % l;
                let d = (self.data[(my, mx)] - self.data[(ry, rx)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / norm
    }
}

/// Radial frequency and angle of every bin of the centered grid.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    /// `|(u, v)|` in cycles/pixel, shape `(L, L)`.
    pub radial_freq: Array2<f64>,
    /// `atan2(v, u)`, shape `(L, L)`.
    pub angle: Array2<f64>,
}

impl FrequencyGrid {
    /// Builds the centered frequency grid for side `l`.
    pub fn new(l: usize) -> Self {
        let half = (l / 2) as isize;
        let mut radial = Array2::zeros((l, l));
        let mut angle = Array2::zeros((l, l));
        for my in 0..l {
            let v = (my as isize - half) as f64 / l as f64;
            for mx in 0..l {
                let u = (mx as isize - half) as f64 / l as f64;
                radial[(my, mx)] = (u * u + v * v).sqrt();
                angle[(my, mx)] = v.atan2(u);
            }
        }
        Self { radial_freq: radial, angle }
    }

    /// Side length `L`.
    pub fn side(&self) -> usize {
        self.radial_freq.dim().0
    }
}

/// Precomputed FFT plans for one image side, shared across a batch.
pub struct FftPlan {
    side: usize,
    forward: Arc<dyn rustfft::Fft<f64>>,
    inverse: Arc<dyn rustfft::Fft<f64>>,
}

impl FftPlan {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn transform(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let l = self.side;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // rows
        for mut row in data.rows_mut() {
            let slice = row.as_slice_mut().expect("row-major layout");
            fft.process_with_scratch(slice, &mut scratch);
        }
        // columns via transpose to keep the data contiguous for the FFT
        let mut t = data.t().as_standard_layout().into_owned();
        for mut row in t.rows_mut() {
            let slice = row.as_slice_mut().expect("row-major layout");
            fft.process_with_scratch(slice, &mut scratch);
        }
        let scale = 1.0 / l as f64;
        let back = t.t();
        data.zip_mut_with(&back, |d, s| *d = s * scale);
    }
}

/// Raw (unshifted) 2D transform with the plan's unitary scaling; layout
/// helpers for modules that work in lag/frequency index space directly.
pub(crate) fn raw_fft2(plan: &FftPlan, data: &mut Array2<Complex64>, inverse: bool) {
    plan.transform(data, inverse);
}

/// Moves the zero-index corner to the center (in place, even sides only).
fn fftshift2(a: &mut Array2<Complex64>) {
    let l = a.dim().0;
    let h = l / 2;
    for y in 0..h {
        for x in 0..l {
            let src = (y, x);
            let dst = ((y + h) % l, (x + h) % l);
            a.swap(src, dst);
        }
    }
}

/// Unitary centered 2D FFT of a real image.
///
/// The result satisfies Parseval (`||F||_2 = ||x||_2`) and conjugate symmetry
/// up to round-off.
pub fn fft2(image: &Array2<f64>) -> Result<FourierImage> {
    let (h, w) = image.dim();
    if h == 0 || h != w {
        return Err(CwfError::Dimension(format!(
            "fft2 expects a non-empty square image, got {h}x{w}"
        )));
    }
    let plan = FftPlan::new(h);
    Ok(fft2_with(image, &plan))
}

/// `fft2` with a caller-provided plan (batch use).
pub fn fft2_with(image: &Array2<f64>, plan: &FftPlan) -> FourierImage {
    let mut buf = image.mapv(|x| Complex64::new(x, 0.0));
    // ifftshift == fftshift for even sides
    fftshift2(&mut buf);
    plan.transform(&mut buf, false);
    fftshift2(&mut buf);
    FourierImage { data: buf }
}

/// Inverse of [`fft2`]; returns the real part (the imaginary part of a
/// conjugate-symmetric spectrum vanishes to round-off).
pub fn ifft2(spectrum: &FourierImage) -> Result<Array2<f64>> {
    let l = spectrum.side();
    if l == 0 {
        return Err(CwfError::Dimension("empty spectrum".into()));
    }
    let plan = FftPlan::new(l);
    Ok(ifft2_with(spectrum, &plan))
}

/// `ifft2` with a caller-provided plan (batch use).
pub fn ifft2_with(spectrum: &FourierImage, plan: &FftPlan) -> Array2<f64> {
    let mut buf = spectrum.data.clone();
    fftshift2(&mut buf);
    plan.transform(&mut buf, true);
    fftshift2(&mut buf);
    buf.mapv(|z| z.re)
}

/// Applies a real isotropic Fourier multiplier to every image of a stack.
///
/// The multiplier is given per grid bin; each image is transformed, scaled
/// bin-wise, and transformed back. Linear, and any two such multipliers
/// commute exactly.
pub fn apply_fourier_multiplier(stack: &ImageStack, multiplier: &Array2<f64>) -> Result<ImageStack> {
    let l = stack.side();
    if multiplier.dim() != (l, l) {
        return Err(CwfError::Dimension(format!(
            "multiplier shape {:?} does not match image side {l}",
            multiplier.dim()
        )));
    }
    let plan = FftPlan::new(l);
    let slices: Vec<Array2<f64>> = stack
        .data
        .outer_iter()
        .into_par_iter()
        .map(|img| {
            let mut spec = fft2_with(&img.to_owned(), &plan);
            spec.data.zip_mut_with(multiplier, |z, &m| *z *= m);
            ifft2_with(&spec, &plan)
        })
        .collect();
    let mut out = Array3::zeros(stack.data.dim());
    for (i, s) in slices.into_iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), i).assign(&s);
    }
    Ok(ImageStack {
        data: out,
        pixel_size: stack.pixel_size,
        group_id: stack.group_id.clone(),
    })
}
