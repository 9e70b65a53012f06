//! Correlation, convolution and Toeplitz solves backing the FIR projections.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Products below this size use direct summation; larger ones go through the FFT.
const DIRECT_LIMIT: usize = 1 << 20;

/// Cross-correlation `c(d) = Σ_n a[n]·b[n + d]` for `d ∈ [-max_lag, max_lag]`,
/// returned at index `d + max_lag`. Out-of-range samples count as zero.
pub fn xcorr(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    if a.len().saturating_mul(2 * max_lag + 1) <= DIRECT_LIMIT {
        xcorr_direct(a, b, max_lag)
    } else {
        xcorr_fft(a, b, max_lag)
    }
}

pub(crate) fn xcorr_direct(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    let lag_range = -(max_lag as isize)..=(max_lag as isize);
    lag_range
        .map(|d| {
            let lo = if d < 0 { (-d) as usize } else { 0 };
            let hi = a.len().min((b.len() as isize - d).max(0) as usize);
            (lo..hi).map(|n| a[n] * b[(n as isize + d) as usize]).sum()
        })
        .collect()
}

pub(crate) fn xcorr_fft(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    let n = (a.len() + b.len()).max(2 * max_lag + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa = padded_complex(a, n);
    let mut fb = padded_complex(b, n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = x.conj() * y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    (-(max_lag as isize)..=(max_lag as isize))
        .map(|d| fa[d.rem_euclid(n as isize) as usize].re * scale)
        .collect()
}

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    if x.len().saturating_mul(h.len()) <= DIRECT_LIMIT {
        convolve_direct(x, h)
    } else {
        convolve_fft(x, h)
    }
}

pub(crate) fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (k, &hk) in h.iter().enumerate() {
        if hk == 0.0 {
            continue;
        }
        for (o, &xn) in out[k..].iter_mut().zip(x) {
            *o += hk * xn;
        }
    }
    out
}

pub(crate) fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let len = x.len() + h.len() - 1;
    let n = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fx = padded_complex(x, n);
    let mut fh = padded_complex(h, n);
    fwd.process(&mut fx);
    fwd.process(&mut fh);
    for (a, b) in fx.iter_mut().zip(&fh) {
        *a *= b;
    }
    inv.process(&mut fx);
    let scale = 1.0 / n as f64;
    fx[..len].iter().map(|c| c.re * scale).collect()
}

fn padded_complex(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    v.resize(n, Complex64::default());
    v
}

/// Solves `T x = b` for the symmetric Toeplitz matrix with first column `col`
/// by Levinson recursion. Returns `None` if the recursion breaks down
/// (non-positive-definite leading minor or non-finite values).
pub fn levinson(col: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = col.len();
    assert_eq!(n, b.len());
    if n == 0 {
        return Some(Vec::new());
    }
    let t0 = col[0];
    if !(t0 > 0.0) {
        return None;
    }
    let r: Vec<f64> = col[1..].iter().map(|c| c / t0).collect();
    let rhs: Vec<f64> = b.iter().map(|v| v / t0).collect();

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    x[0] = rhs[0];
    if n == 1 {
        return Some(x);
    }
    y[0] = -r[0];
    let mut beta = 1.0;
    let mut alpha = -r[0];
    let mut scratch = vec![0.0; n];

    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        if !(beta > 0.0) || !beta.is_finite() {
            return None;
        }
        let dot: f64 = (0..k).map(|i| r[i] * x[k - 1 - i]).sum();
        let mu = (rhs[k] - dot) / beta;
        for i in 0..k {
            scratch[i] = x[i] + mu * y[k - 1 - i];
        }
        x[..k].copy_from_slice(&scratch[..k]);
        x[k] = mu;

        if k < n - 1 {
            let dot: f64 = (0..k).map(|i| r[i] * y[k - 1 - i]).sum();
            alpha = (-r[k] - dot) / beta;
            for i in 0..k {
                scratch[i] = y[i] + alpha * y[k - 1 - i];
            }
            y[..k].copy_from_slice(&scratch[..k]);
            y[k] = alpha;
        }
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Cholesky solve of a dense symmetric positive-definite system.
pub fn cholesky_solve(matrix: DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let chol = matrix.cholesky()?;
    let sol = chol.solve(&DVector::from_column_slice(rhs));
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

/// Dense symmetric Toeplitz matrix from its first column.
pub fn toeplitz(col: &[f64]) -> DMatrix<f64> {
    let n = col.len();
    DMatrix::from_fn(n, n, |i, j| col[i.abs_diff(j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn xcorr_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = rand_vec(&mut rng, 3000);
        let b = rand_vec(&mut rng, 3000);
        let d = xcorr_direct(&a, &b, 40);
        let f = xcorr_fft(&a, &b, 40);
        for (x, y) in d.iter().zip(&f) {
            assert!((x - y).abs() < 1e-10);
        }
        // c(1) = Σ a[n] b[n+1]
        let manual: f64 = (0..2999).map(|n| a[n] * b[n + 1]).sum();
        assert!((d[41] - manual).abs() < 1e-12);
    }

    #[test]
    fn convolution_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_vec(&mut rng, 2000);
        let h = rand_vec(&mut rng, 33);
        let d = convolve_direct(&x, &h);
        let f = convolve_fft(&x, &h);
        assert_eq!(d.len(), 2032);
        for (p, q) in d.iter().zip(&f) {
            assert!((p - q).abs() < 1e-10);
        }
        assert_eq!(convolve_direct(&[1.0, 2.0], &[0.0, 1.0]), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn levinson_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 8, 40] {
            let sig = rand_vec(&mut rng, 200);
            let col: Vec<f64> = xcorr_direct(&sig, &sig, n - 1)[n - 1..].to_vec();
            let b = rand_vec(&mut rng, n);
            let lev = levinson(&col, &b).unwrap();
            let dense = toeplitz(&col).lu().solve(&DVector::from_column_slice(&b)).unwrap();
            for (x, y) in lev.iter().zip(dense.iter()) {
                assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()), "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn levinson_reports_breakdown() {
        assert!(levinson(&[0.0, 1.0], &[1.0, 1.0]).is_none());
        // Indefinite: [[1, 2], [2, 1]]
        assert!(levinson(&[1.0, 2.0], &[1.0, 0.0]).is_none());
    }
}
