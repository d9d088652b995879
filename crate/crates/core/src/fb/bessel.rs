//! Bessel functions of the first kind: evaluation helpers and zeros.
//!
//! Point evaluation delegates to `libm` (fdlibm `j0`/`j1`/`jn`). Zeros are
//! found by Newton iteration started from McMahon's asymptotic expansion and
//! safeguarded by the interlacing brackets `j(k-1,q) < j(k,q) < j(k-1,q+1)`,
//! then verified to a 1e-12 residual.

/// `J_k(x)` for integer order `k >= 0`.
pub fn bessel_j(k: usize, x: f64) -> f64 {
    match k {
        0 => libm::j0(x),
        1 => libm::j1(x),
        _ => libm::jn(k as i32, x),
    }
}

/// `J_k'(x)`.
pub fn bessel_j_deriv(k: usize, x: f64) -> f64 {
    if k == 0 {
        -libm::j1(x)
    } else {
        bessel_j(k - 1, x) - (k as f64 / x) * bessel_j(k, x)
    }
}

/// Fills `out[0..=k_max]` with `J_0(x) .. J_{k_max}(x)` using Miller's
/// downward recurrence (forward recurrence when `x` dominates the order).
///
/// One call costs `O(k_max)`, against `O(k_max^2)` for repeated `jn`.
pub fn bessel_j_all(k_max: usize, x: f64, out: &mut [f64]) {
    assert!(out.len() > k_max);
    if x == 0.0 {
        out[0] = 1.0;
        for v in out.iter_mut().skip(1).take(k_max) {
            *v = 0.0;
        }
        return;
    }
    let ax = x.abs();
    if ax > k_max as f64 + 10.0 {
        // forward recurrence is stable above the turning point
        out[0] = libm::j0(ax);
        if k_max >= 1 {
            out[1] = libm::j1(ax);
        }
        for k in 1..k_max {
            out[k + 1] = (2.0 * k as f64 / ax) * out[k] - out[k - 1];
        }
    } else {
        // Miller: recur down from well above max(order, argument), then
        // normalize with J_0(x) + 2 * sum_{m>=1} J_{2m}(x) = 1
        let start = k_max.max(ax as usize) as f64;
        let m = (start + 1.5 * (40.0 * start).sqrt()) as usize + 20;
        let mut j_hi = 0.0f64; // J_{n+1}
        let mut j_cur = 1e-300f64; // J_n, arbitrary seed at n = m
        let mut even_sum = 0.0f64;
        let mut buf = vec![0.0f64; k_max + 1];
        for n in (1..=m).rev() {
            let j_lo = (2.0 * n as f64 / ax) * j_cur - j_hi;
            j_hi = j_cur;
            j_cur = j_lo; // J_{n-1}
            if j_cur.abs() > 1e250 {
                j_cur *= 1e-250;
                j_hi *= 1e-250;
                even_sum *= 1e-250;
                for v in buf.iter_mut() {
                    *v *= 1e-250;
                }
            }
            let order = n - 1;
            if order <= k_max {
                buf[order] = j_cur;
            }
            if order >= 2 && order % 2 == 0 {
                even_sum += j_cur;
            }
        }
        let scale = 1.0 / 2.0f64.mul_add(even_sum, j_cur);
        for (o, b) in out.iter_mut().take(k_max + 1).zip(buf.iter()) {
            *o = b * scale;
        }
    }
    if x < 0.0 {
        // J_k(-x) = (-1)^k J_k(x)
        for (k, v) in out.iter_mut().enumerate().take(k_max + 1) {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
}

/// McMahon's large-argument approximation of the `q`-th positive zero of `J_k`.
fn mcmahon_zero(k: usize, q: usize) -> f64 {
    let mu = 4.0 * (k as f64) * (k as f64);
    let b = (q as f64 + 0.5 * k as f64 - 0.25) * std::f64::consts::PI;
    let b8 = 8.0 * b;
    b - (mu - 1.0) / b8
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * b8.powi(5))
}

/// Positive zeros of `J_k` up to `limit`, plus two spares beyond it.
///
/// `prev_row` must hold the zeros of `J_{k-1}` (same spare convention) when
/// `k > 0`; interlacing then brackets every zero. The spares guarantee the
/// next order can be bracketed in turn.
pub fn bessel_zeros_row(k: usize, prev_row: Option<&[f64]>, limit: f64) -> Vec<f64> {
    let mut zeros: Vec<f64> = Vec::new();
    let mut beyond = 0usize;
    let mut q = 1usize;
    while beyond < 2 {
        let (lo, hi) = match (k, prev_row) {
            (0, _) => {
                let g = mcmahon_zero(0, q);
                (g - 1.0, g + 1.0)
            }
            (_, Some(prev)) => {
                if q < prev.len() {
                    (prev[q - 1], prev[q])
                } else {
                    // past the spares of the previous row: scan for a sign
                    // change starting at the last known lower bound
                    let lo = if q - 1 < prev.len() {
                        prev[q - 1]
                    } else {
                        *zeros.last().expect("at least one zero before fallback")
                    };
                    scan_bracket(k, lo)
                }
            }
            (_, None) => panic!("previous row required for k > 0"),
        };
        let z = refine_zero(k, mcmahon_zero(k, q), lo, hi);
        if z > limit {
            beyond += 1;
        }
        zeros.push(z);
        q += 1;
    }
    zeros
}

/// Finds a sign-changing interval of `J_k` starting just above `lo`.
fn scan_bracket(k: usize, lo: f64) -> (f64, f64) {
    let mut a = lo + 1e-9 * lo.max(1.0);
    let mut fa = bessel_j(k, a);
    let step = 0.25;
    for _ in 0..64 {
        let b = a + step;
        let fb = bessel_j(k, b);
        if fa.signum() != fb.signum() {
            return (a, b);
        }
        a = b;
        fa = fb;
    }
    panic!("no sign change of J_{k} found above {lo}");
}

/// First `count` positive zeros of `J_k` for every `k` in `0..=k_max`.
///
/// `counts[k]` gives how many zeros to produce for order `k`; the slice must
/// satisfy `counts[k] + 1 <= counts[k-1]`-style interlacing needs are handled
/// internally by always producing one spare zero per order.
pub fn bessel_zeros_table(k_max: usize, counts: &[usize]) -> Vec<Vec<f64>> {
    assert_eq!(counts.len(), k_max + 1);
    // each order needs one spare zero beyond whatever the next order needs,
    // so that interlacing always provides an upper bracket
    let mut wants = counts.to_vec();
    for k in (0..k_max).rev() {
        wants[k] = wants[k].max(wants[k + 1] + 1);
    }
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let want = wants[k];
        let mut zeros = Vec::with_capacity(want);
        for q in 1..=want {
            let (lo, hi) = if k == 0 {
                // J_0 zeros are separated by roughly pi around McMahon points
                let g = mcmahon_zero(0, q);
                (g - 1.0, g + 1.0)
            } else {
                let prev = &table[k - 1];
                let lo = prev[q - 1];
                let hi = if q < prev.len() {
                    prev[q]
                } else {
                    prev[q - 1] + std::f64::consts::PI + 2.0
                };
                (lo, hi)
            };
            zeros.push(refine_zero(k, mcmahon_zero(k, q), lo, hi));
        }
        table.push(zeros);
    }
    for (k, zeros) in table.iter_mut().enumerate() {
        zeros.truncate(counts[k]);
    }
    table
}

/// Newton iteration clamped to a sign-changing bracket, with bisection as the
/// fallback step. Panics if the residual cannot be driven below 1e-12 (which
/// would indicate a broken bracket, not a data-dependent failure).
fn refine_zero(k: usize, guess: f64, mut lo: f64, mut hi: f64) -> f64 {
    debug_assert!(lo < hi);
    let f_lo = bessel_j(k, lo);
    let mut x = guess.clamp(lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo));
    for _ in 0..100 {
        let f = bessel_j(k, x);
        if f.abs() < 1e-13 {
            break;
        }
        // maintain the bracket
        if (f > 0.0) == (f_lo > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let d = bessel_j_deriv(k, x);
        let newton = x - f / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let residual = bessel_j(k, x).abs();
    assert!(
        residual < 1e-12,
        "Bessel zero refinement failed: J_{k} at {x} has residual {residual}"
    );
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn known_low_order_zeros() {
        // classical table values, double-checked below by bisection
        let table = bessel_zeros_table(1, &[3, 3]);
        let j0_expected = [2.404825557695773, 5.520078110286311, 8.653727912911013];
        let j1_expected = [3.831705970207512, 7.015586669815613, 10.173468135062722];
        for (got, want) in table[0].iter().zip(j0_expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-11);
        }
        for (got, want) in table[1].iter().zip(j1_expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-11);
        }
    }

    #[test]
    fn zeros_agree_with_bisection_oracle() {
        // independent slow-scan + bisection over a few orders
        for &k in &[0usize, 3, 17, 40] {
            let zeros = bessel_zeros_table(k, &vec![4; k + 1]).pop().unwrap();
            let mut found = Vec::new();
            let mut x = 1e-6;
            let step = 1e-3;
            let mut prev = bessel_j(k, x);
            while found.len() < 4 {
                let nx = x + step;
                let cur = bessel_j(k, nx);
                if prev.signum() != cur.signum() {
                    let (mut lo, mut hi) = (x, nx);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if bessel_j(k, mid).signum() == prev.signum() {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    found.push(0.5 * (lo + hi));
                }
                prev = cur;
                x = nx;
            }
            for (a, b) in zeros.iter().zip(found.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zeros_interlace() {
        let counts: Vec<usize> = (0..=30).map(|k| 12usize.saturating_sub(k / 4)).collect();
        let table = bessel_zeros_table(30, &counts);
        for k in 1..=30 {
            for q in 0..table[k].len() {
                assert!(table[k][q] > table[k - 1][q]);
                if q + 1 < table[k - 1].len() {
                    assert!(table[k][q] < table[k - 1][q + 1]);
                }
            }
        }
    }

    #[test]
    fn batch_evaluation_matches_libm() {
        let mut buf = vec![0.0; 61];
        for &x in &[0.3, 2.0, 17.5, 55.0, 120.0] {
            bessel_j_all(60, x, &mut buf);
            for k in (0..=60).step_by(7) {
                let reference = bessel_j(k, x);
                assert_abs_diff_eq!(buf[k], reference, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residuals_below_threshold() {
        let counts: Vec<usize> = (0..=80).map(|_| 6).collect();
        let table = bessel_zeros_table(80, &counts);
        for (k, zeros) in table.iter().enumerate() {
            for &z in zeros {
                assert!(bessel_j(k, z).abs() < 1e-12);
            }
        }
    }
}
