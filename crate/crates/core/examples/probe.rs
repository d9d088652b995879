// temporary probe: estimator quality vs taper, at criterion sizes
use cwf_core::ctf::RadialProfile;
use cwf_core::image::{apply_fourier_multiplier, FrequencyGrid, ImageStack};
use cwf_core::noise::{build_whitening, estimate_psd_corners, estimate_sigma2_white, whiten_stack};
use ndarray::Array3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn white(n: usize, l: usize, seed: u64) -> ImageStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array3::from_shape_fn((n, l, l), |_| rng.sample::<f64, _>(StandardNormal));
    ImageStack::ungrouped(data, 1.0).unwrap()
}

fn band(psd: &RadialProfile, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    psd.radii
        .iter()
        .zip(psd.values.iter())
        .filter(|(&r, _)| r >= lo && r <= hi)
        .map(|(&r, &v)| (r, v))
        .collect()
}

fn main() {
    let (n, l) = (1000usize, 64usize);
    // white flatness
    let w = white(n, l, 1);
    let psd = estimate_psd_corners(&w, 20.0).unwrap();
    let b = band(&psd, 0.04, 0.45);
    let mean = b.iter().map(|p| p.1).sum::<f64>() / b.len() as f64;
    let worst = b.iter().map(|p| (p.1 / mean - 1.0).abs()).fold(0.0, f64::max);
    println!("white: mean {mean:.4}, worst rel dev {worst:.3}");

    // colored
    let grid = FrequencyGrid::new(l);
    let mult = grid.radial_freq.mapv(|r| {
        let k = r * l as f64;
        1.0 / (1.0 + k * k).sqrt()
    });
    let colored = apply_fourier_multiplier(&white(n, l, 2), &mult).unwrap();
    let psd = estimate_psd_corners(&colored, 20.0).unwrap();
    let b = band(&psd, 0.08, 0.35);
    let reference = |r: f64| { let k = r * l as f64; 1.0 / (1.0 + k * k) };
    let scale = b.iter().map(|p| p.1).sum::<f64>() / b.iter().map(|p| reference(p.0)).sum::<f64>();
    let worst = b.iter().map(|p| (p.1 / (scale * reference(p.0)) - 1.0).abs()).fold(0.0, f64::max);
    println!("lorentz: anchored worst rel dev {worst:.3}");

    // whitening flatness + variance
    let wprof = build_whitening(&psd).unwrap();
    let whitened = whiten_stack(&colored, &wprof).unwrap();
    let psd2 = estimate_psd_corners(&whitened, 20.0).unwrap();
    let b2 = band(&psd2, 0.05, 0.45);
    let mean2 = b2.iter().map(|p| p.1).sum::<f64>() / b2.len() as f64;
    let worst2 = b2.iter().map(|p| (p.1 / mean2 - 1.0).abs()).fold(0.0, f64::max);
    let var = estimate_sigma2_white(&whitened, 20.0).unwrap();
    println!("whitened: worst flatness dev {worst2:.3}, variance {var:.4}");
}
