use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 10_000, confidence: 0.95, seed: 0 }
    }
}

/// Median of `values`; the mean of the two middle elements for even lengths.
/// Returns NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1)·q`), matching numpy's default.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Percentile bootstrap interval of the median.
///
/// Values are sorted before resampling so the result does not depend on input
/// order. Each resample draws `n` indices uniformly with replacement from a
/// ChaCha8 stream seeded with `seed`. The interval is widened if needed so that
/// it contains the sample median; a confidence of 0 collapses it onto the
/// sample median.
pub fn bootstrap_median_ci(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    if resamples == 0 {
        return Err(StudyError::InvalidConfig("resamples must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(StudyError::InvalidConfig(format!("confidence {confidence} outside [0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = median_sorted(&sorted);
    if confidence == 0.0 {
        return Ok((m, m));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = vec![0.0; n];
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for d in draw.iter_mut() {
                *d = sorted[rng.random_range(0..n)];
            }
            draw.sort_by(f64::total_cmp);
            median_sorted(&draw)
        })
        .collect();
    medians.sort_by(f64::total_cmp);

    let alpha = 1.0 - confidence;
    let lo = quantile_sorted(&medians, alpha / 2.0);
    let hi = quantile_sorted(&medians, 1.0 - alpha / 2.0);
    Ok((lo.min(m), hi.max(m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_has_degenerate_interval() {
        assert_eq!(bootstrap_median_ci(&[4.0; 12], 1000, 0.95, 3).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn interval_brackets_median_and_is_deterministic() {
        let v = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0, 5.0, 2.0];
        let (lo, hi) = bootstrap_median_ci(&v, 2000, 0.95, 9).unwrap();
        assert!(lo <= median(&v) && median(&v) <= hi);
        assert!(lo >= 1.0 && hi <= 5.0);
        assert_eq!(bootstrap_median_ci(&v, 2000, 0.95, 9).unwrap(), (lo, hi));
        let mut rev = v;
        rev.reverse();
        assert_eq!(bootstrap_median_ci(&rev, 2000, 0.95, 9).unwrap(), (lo, hi));
    }

    #[test]
    fn invalid_arguments() {
        assert_eq!(bootstrap_median_ci(&[], 10, 0.95, 0), Err(StudyError::EmptyInput));
        assert!(bootstrap_median_ci(&[1.0], 0, 0.95, 0).is_err());
        assert!(bootstrap_median_ci(&[1.0], 10, 1.0, 0).is_err());
        assert_eq!(bootstrap_median_ci(&[1.0, 2.0, 5.0, 3.0], 10, 0.0, 0).unwrap(), (2.5, 2.5));
    }
}
