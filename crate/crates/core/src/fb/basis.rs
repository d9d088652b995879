//! Basis construction and the forward/inverse coefficient transforms.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::num::NonZeroUsize;
use std::sync::Arc;

use super::bessel::{bessel_j, bessel_zeros_row};
use super::sampler::PolarSampler;
use crate::ctf::RadialProfile;
use crate::image::ImageStack;
use crate::{CwfError, Result};

/// Upper bound constant for the retained basis size: `sum_k p_k <= KAPPA * L^2`.
pub const KAPPA: f64 = 0.5;

/// Radial quadrature node count factor: `n_r = ceil(RADIAL_FACTOR * c * L)`.
const RADIAL_FACTOR: f64 = 4.0;
/// Angular node count factor, rounded up to a power of two.
const ANGULAR_FACTOR: f64 = 16.0;

/// Per-angular-frequency coefficient blocks for a batch of images.
///
/// Block `k` is a `p_k x n` complex matrix; column `i` holds image `i`'s
/// coefficients. Only `k >= 0` is stored: for real images the negative
/// blocks are the conjugates of the positive ones.
#[derive(Debug, Clone)]
pub struct FbCoeffs {
    pub blocks: Vec<DMatrix<Complex64>>,
}

impl FbCoeffs {
    pub fn zeros_like(basis: &FbBasis, n_images: usize) -> Self {
        Self {
            blocks: basis
                .block_sizes()
                .iter()
                .map(|&p| DMatrix::zeros(p, n_images))
                .collect(),
        }
    }

    pub fn n_images(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Squared Frobenius norm counting the implicit negative-k conjugate
    /// blocks (block 0 once, every other block twice).
    pub fn norm2(&self) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let mult = if k == 0 { 1.0 } else { 2.0 };
                mult * b.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    /// Extracts the coefficients of one image as per-block column vectors.
    pub fn image(&self, i: usize) -> Vec<DVector<Complex64>> {
        self.blocks.iter().map(|b| b.column(i).into_owned()).collect()
    }

    /// Squared norm of one image's coefficients with conjugate doubling.
    pub fn image_norm2(&self, i: usize) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let mult = if k == 0 { 1.0 } else { 2.0 };
                mult * b.column(i).iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum()
    }
}

/// A radially isotropic operator expressed per angular block.
///
/// Block `k` is the real symmetric `p_k x p_k` matrix of the operator
/// restricted to angular frequency `k`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockOperator {
    pub fn identity(basis: &FbBasis) -> Self {
        Self {
            blocks: basis
                .block_sizes()
                .iter()
                .map(|&p| DMatrix::identity(p, p))
                .collect(),
        }
    }

    /// Complex copies of the blocks, for mixing with coefficient matrices.
    pub fn to_complex(&self) -> Vec<DMatrix<Complex64>> {
        self.blocks
            .iter()
            .map(|b| b.map(|x| Complex64::new(x, 0.0)))
            .collect()
    }

    /// Applies the operator to every image of a coefficient batch.
    pub fn apply(&self, coeffs: &FbCoeffs) -> FbCoeffs {
        let blocks = self
            .blocks
            .par_iter()
            .zip(coeffs.blocks.par_iter())
            .map(|(a, c)| {
                let ac = a.map(|x| Complex64::new(x, 0.0));
                &ac * c
            })
            .collect();
        FbCoeffs { blocks }
    }

    /// Per-block inverses via symmetric eigendecomposition, for un-whitening.
    pub fn inverse_blocks(&self) -> Result<BlockOperator> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let sym = (b + b.transpose()) * 0.5;
                let eig = sym.symmetric_eigen();
                let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
                if eig.eigenvalues.iter().any(|&e| e <= 1e-14 * max) {
                    return Err(CwfError::Singular(
                        "operator block is singular; cannot invert".into(),
                    ));
                }
                let inv_vals = DVector::from_iterator(
                    eig.eigenvalues.len(),
                    eig.eigenvalues.iter().map(|&e| 1.0 / e),
                );
                Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockOperator { blocks })
    }
}

/// Synthesis tables on the Cartesian frequency grid: the basis functions
/// evaluated at every in-disk grid bin, grouped by exact radius.
struct GridSynthesis {
    /// Radial tables at the unique grid radii, one `p_k x n_unique` per `k`.
    tables: Vec<DMatrix<f64>>,
    /// In-disk bins: flat grid index, unique-radius index, and `exp(i theta)`.
    bins: Vec<(usize, u32, Complex64)>,
}

/// The steerable Fourier-Bessel basis on the disk of bandlimit `c`.
pub struct FbBasis {
    side: usize,
    bandlimit: f64,
    /// Zeros `R_{k,1..p_k}` of `J_k`, one list per retained `k`.
    zeros: Vec<Vec<f64>>,
    /// Orthonormalization constants `N_{k,q}` matching `zeros`.
    norms: Vec<Vec<f64>>,
    /// Radial part `N_{k,q} J_k(R_{k,q} xi_j / c)` tabulated at the
    /// quadrature nodes; one `p_k x n_r` matrix per `k`.
    radial_tables: Vec<DMatrix<f64>>,
    /// Gauss-Legendre nodes on `[0, c]` in cycles/pixel.
    radii: Vec<f64>,
    /// Matching Gauss-Legendre weights (plain, no measure factors).
    gl_weights: Vec<f64>,
    n_theta: usize,
    sampler: PolarSampler,
    synthesis: GridSynthesis,
    fft_theta_fwd: Arc<dyn rustfft::Fft<f64>>,
    plan_side: crate::image::FftPlan,
}

impl FbBasis {
    /// Builds the basis for images of side `l` band-limited to `c`
    /// cycles/pixel, retaining `(k, q)` when `R_{k,q+1} <= 2 pi c (L/2)`.
    pub fn build(l: usize, c: f64) -> Result<Self> {
        if l < 8 || l % 2 != 0 {
            return Err(CwfError::Dimension(format!(
                "side must be even and >= 8, got {l}"
            )));
        }
        if !(c > 0.0 && c <= 0.5) {
            return Err(CwfError::Domain(format!(
                "bandlimit must lie in (0, 0.5], got {c}"
            )));
        }
        let cutoff = std::f64::consts::TAU * c * (l as f64 / 2.0);

        // zeros per order until the sampling criterion exhausts
        let mut zeros: Vec<Vec<f64>> = Vec::new();
        let mut norms: Vec<Vec<f64>> = Vec::new();
        let mut prev_row: Option<Vec<f64>> = None;
        loop {
            let k = zeros.len();
            let row = bessel_zeros_row(k, prev_row.as_deref(), cutoff);
            let below = row.iter().filter(|&&z| z <= cutoff).count();
            // (k, q) retained iff the *next* zero is still below the cutoff
            let p_k = below.saturating_sub(1);
            if p_k == 0 {
                break;
            }
            let retained: Vec<f64> = row[..p_k].to_vec();
            let norm: Vec<f64> = retained
                .iter()
                .map(|&r| 1.0 / (c * std::f64::consts::PI.sqrt() * bessel_j(k + 1, r).abs()))
                .collect();
            zeros.push(retained);
            norms.push(norm);
            prev_row = Some(row);
        }
        if zeros.is_empty() {
            return Err(CwfError::Domain(format!(
                "bandlimit {c} retains no basis function at side {l}"
            )));
        }
        let total: usize = zeros.iter().map(|z| z.len()).sum();
        debug_assert!(
            (total as f64) <= KAPPA * (l * l) as f64,
            "basis size {total} exceeds {KAPPA} * L^2"
        );

        // radial Gauss-Legendre rule mapped to [0, c]
        let n_r = (RADIAL_FACTOR * c * l as f64).ceil() as usize;
        let rule = gauss_quad::GaussLegendre::new(NonZeroUsize::new(n_r).expect("n_r > 0"));
        let mut pairs: Vec<(f64, f64)> = rule
            .iter()
            .map(|(x, w)| (0.5 * c * (x + 1.0), 0.5 * c * w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let radii: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let gl_weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();

        let n_theta = ((ANGULAR_FACTOR * c * l as f64).ceil() as usize).next_power_of_two();

        // polar nodes, ring-major
        let mut nodes = Vec::with_capacity(n_r * n_theta);
        for &r in &radii {
            for t in 0..n_theta {
                let theta = std::f64::consts::TAU * t as f64 / n_theta as f64;
                nodes.push((r * theta.cos(), r * theta.sin()));
            }
        }
        let sampler = PolarSampler::new(l, &nodes);

        // radial tables
        let radial_tables: Vec<DMatrix<f64>> = zeros
            .par_iter()
            .zip(norms.par_iter())
            .enumerate()
            .map(|(k, (zk, nk))| {
                DMatrix::from_fn(zk.len(), n_r, |q, j| {
                    nk[q] * bessel_j(k, zk[q] * radii[j] / c)
                })
            })
            .collect();

        // synthesis tables on the Cartesian grid: group in-disk bins by the
        // exact squared integer radius a^2 + b^2
        let half = (l / 2) as i64;
        let r2_limit = (c * l as f64) * (c * l as f64) + 1e-9;
        let mut unique_r2: Vec<u32> = Vec::new();
        let mut bins_raw: Vec<(usize, u32, Complex64)> = Vec::new();
        for my in 0..l {
            let b = my as i64 - half;
            for mx in 0..l {
                let a = mx as i64 - half;
                let r2 = (a * a + b * b) as u32;
                if (r2 as f64) <= r2_limit {
                    let theta = (b as f64).atan2(a as f64);
                    bins_raw.push((my * l + mx, r2, Complex64::from_polar(1.0, theta)));
                }
            }
        }
        unique_r2.extend(bins_raw.iter().map(|&(_, r2, _)| r2));
        unique_r2.sort_unstable();
        unique_r2.dedup();
        let bins: Vec<(usize, u32, Complex64)> = bins_raw
            .into_iter()
            .map(|(idx, r2, ph)| {
                let ur = unique_r2.binary_search(&r2).expect("radius present") as u32;
                (idx, ur, ph)
            })
            .collect();
        let synth_tables: Vec<DMatrix<f64>> = zeros
            .par_iter()
            .zip(norms.par_iter())
            .enumerate()
            .map(|(k, (zk, nk))| {
                DMatrix::from_fn(zk.len(), unique_r2.len(), |q, j| {
                    let xi = (unique_r2[j] as f64).sqrt() / l as f64;
                    nk[q] * bessel_j(k, zk[q] * xi / c)
                })
            })
            .collect();

        let mut planner = FftPlanner::new();
        Ok(Self {
            side: l,
            bandlimit: c,
            zeros,
            norms,
            radial_tables,
            radii,
            gl_weights,
            n_theta,
            sampler,
            synthesis: GridSynthesis { tables: synth_tables, bins },
            fft_theta_fwd: planner.plan_fft_forward(n_theta),
            plan_side: crate::image::FftPlan::new(l),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bandlimit(&self) -> f64 {
        self.bandlimit
    }

    /// Largest retained angular frequency.
    pub fn k_max(&self) -> usize {
        self.zeros.len() - 1
    }

    /// `p_k` for every retained `k`.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.zeros.iter().map(|z| z.len()).collect()
    }

    /// Total retained basis size `sum_k p_k` (k >= 0 only).
    pub fn total_size(&self) -> usize {
        self.zeros.iter().map(|z| z.len()).sum()
    }

    pub fn zeros(&self) -> &[Vec<f64>] {
        &self.zeros
    }

    pub fn norms(&self) -> &[Vec<f64>] {
        &self.norms
    }

    /// Radial quadrature nodes in cycles/pixel.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    fn n_radial(&self) -> usize {
        self.radii.len()
    }

    /// Forward transform of a whole stack into per-block coefficients.
    pub fn forward(&self, stack: &ImageStack) -> Result<FbCoeffs> {
        if stack.side() != self.side {
            return Err(CwfError::Dimension(format!(
                "stack side {} does not match basis side {}",
                stack.side(),
                self.side
            )));
        }
        let n = stack.len();
        let mut coeffs = FbCoeffs::zeros_like(self, n);

        // per-image results gathered in batches to bound peak memory
        let batch = 2048usize.max(1);
        for start in (0..n).step_by(batch) {
            let end = (start + batch).min(n);
            let batch_out: Vec<Vec<DVector<Complex64>>> = (start..end)
                .into_par_iter()
                .map(|i| self.forward_single(&stack.data.index_axis(ndarray::Axis(0), i).to_owned()))
                .collect();
            for (offset, img_blocks) in batch_out.into_iter().enumerate() {
                for (k, v) in img_blocks.into_iter().enumerate() {
                    coeffs.blocks[k].set_column(start + offset, &v);
                }
            }
        }
        Ok(coeffs)
    }

    /// Coefficients of a single image.
    pub fn forward_single(&self, image: &Array2<f64>) -> Vec<DVector<Complex64>> {
        let n_r = self.n_radial();
        let n_t = self.n_theta;
        let mut polar = vec![Complex64::default(); n_r * n_t];
        self.sampler.forward(image, &mut polar);

        // angular DFT per ring: bin k of ring j is sum_t F(j,t) e^{-ik theta_t}
        let mut scratch =
            vec![Complex64::default(); self.fft_theta_fwd.get_inplace_scratch_len()];
        for ring in polar.chunks_exact_mut(n_t) {
            self.fft_theta_fwd.process_with_scratch(ring, &mut scratch);
        }

        // radial quadrature with the unitary-transform weight folded in
        let l = self.side as f64;
        let wq: Vec<f64> = self
            .gl_weights
            .iter()
            .zip(self.radii.iter())
            .map(|(&w, &r)| l * w * r * std::f64::consts::TAU / n_t as f64)
            .collect();

        self.zeros
            .iter()
            .enumerate()
            .map(|(k, zk)| {
                let table = &self.radial_tables[k];
                let mut out = DVector::from_element(zk.len(), Complex64::default());
                for j in 0..n_r {
                    let g = polar[j * n_t + k] * wq[j];
                    for q in 0..zk.len() {
                        out[q] += table[(q, j)] * g;
                    }
                }
                out
            })
            .collect()
    }

    /// Inverse transform: synthesizes real images from coefficients.
    pub fn inverse(&self, coeffs: &FbCoeffs) -> Result<ImageStack> {
        if coeffs.n_blocks() != self.zeros.len()
            || coeffs
                .blocks
                .iter()
                .zip(self.zeros.iter())
                .any(|(b, z)| b.nrows() != z.len())
        {
            return Err(CwfError::Dimension(
                "coefficient block sizes do not match the basis".into(),
            ));
        }
        let n = coeffs.n_images();
        let l = self.side;
        let mut out = Array3::zeros((n, l, l));
        let images: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let per_image: Vec<DVector<Complex64>> =
                    coeffs.blocks.iter().map(|b| b.column(i).into_owned()).collect();
                self.inverse_single(&per_image)
            })
            .collect();
        for (i, img) in images.into_iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), i).assign(&img);
        }
        ImageStack::ungrouped(out, 1.0)
    }

    /// Synthesizes one real image: the represented spectrum is evaluated at
    /// every in-disk Cartesian grid bin (negative angular frequencies come in
    /// by conjugate symmetry), Hermitian-symmetrized, and inverse FFT'd.
    pub fn inverse_single(&self, blocks: &[DVector<Complex64>]) -> Array2<f64> {
        let l = self.side;
        let n_unique = self.synthesis.tables.first().map_or(0, |t| t.ncols());

        // radial sums h_k(xi) = sum_q a_{k,q} f_{k,q}(xi) at the unique radii
        let mut h = vec![Complex64::default(); blocks.len() * n_unique];
        for (k, a) in blocks.iter().enumerate() {
            let table = &self.synthesis.tables[k];
            let row = &mut h[k * n_unique..(k + 1) * n_unique];
            for q in 0..a.nrows() {
                let aq = a[q];
                for (j, out) in row.iter_mut().enumerate() {
                    *out += table[(q, j)] * aq;
                }
            }
        }

        // spectrum: h_0 + sum_{k>=1} ( h_k e^{ik theta} +- conj term ), with
        // the 1/L matching the coefficient scale a = L <F, psi>
        let inv_l = 1.0 / l as f64;
        let mut spec = Array2::<Complex64>::default((l, l));
        let flat = spec.as_slice_mut().expect("contiguous");
        for &(idx, ur, phase1) in &self.synthesis.bins {
            let mut acc = h[ur as usize];
            let mut phase = Complex64::new(1.0, 0.0);
            for k in 1..blocks.len() {
                phase *= phase1;
                let term = h[k * n_unique + ur as usize] * phase;
                acc += if k % 2 == 0 {
                    term + term.conj()
                } else {
                    term - term.conj()
                };
            }
            flat[idx] = acc * inv_l;
        }

        // enforce the conjugate symmetry of a real image's spectrum exactly
        for my in 0..l {
            let ry = (l - my) % l;
            for mx in 0..l {
                let rx = (l - mx) % l;
                if (my, mx) <= (ry, rx) {
                    let avg = 0.5 * (spec[(my, mx)] + spec[(ry, rx)].conj());
                    spec[(my, mx)] = avg;
                    spec[(ry, rx)] = avg.conj();
                }
            }
        }
        crate::image::ifft2_with(&crate::image::FourierImage { data: spec }, &self.plan_side)
    }

    /// Projects a radial profile onto the basis as per-block matrices:
    /// block `k` entry `(q, q')` is the disk integral of
    /// `profile(xi) f_kq(xi) f_kq'(xi)` with the angular factor included.
    pub fn radial_operator_blocks(&self, profile: &RadialProfile) -> Result<BlockOperator> {
        if profile.max_radius() + 1e-12 < self.bandlimit {
            return Err(CwfError::Domain(format!(
                "profile covers [0, {}] but the basis needs [0, {}]",
                profile.max_radius(),
                self.bandlimit
            )));
        }
        let n_r = self.n_radial();
        let mut diag = DVector::zeros(n_r);
        for j in 0..n_r {
            diag[j] = std::f64::consts::TAU
                * self.gl_weights[j]
                * self.radii[j]
                * profile.interp(self.radii[j])?;
        }
        let blocks = self
            .radial_tables
            .par_iter()
            .map(|table| {
                let mut scaled = table.clone();
                for j in 0..n_r {
                    scaled.column_mut(j).scale_mut(diag[j]);
                }
                let m = &scaled * table.transpose();
                (&m + m.transpose()) * 0.5
            })
            .collect();
        Ok(BlockOperator { blocks })
    }

    /// Evaluates the CTF-style radial profile at the quadrature nodes and
    /// projects it in one step.
    pub fn operator_from_fn(&self, f: impl Fn(f64) -> f64) -> BlockOperator {
        let n_r = self.n_radial();
        let mut diag = DVector::zeros(n_r);
        for j in 0..n_r {
            diag[j] = std::f64::consts::TAU * self.gl_weights[j] * self.radii[j] * f(self.radii[j]);
        }
        let blocks = self
            .radial_tables
            .par_iter()
            .map(|table| {
                let mut scaled = table.clone();
                for j in 0..n_r {
                    scaled.column_mut(j).scale_mut(diag[j]);
                }
                let m = &scaled * table.transpose();
                (&m + m.transpose()) * 0.5
            })
            .collect();
        BlockOperator { blocks }
    }
}
