mod common;

use rand::Rng;
use svseval::study::bootstrap_median_ci;

/// Percentile bootstrap written out step by step: sort, draw `n` indices per
/// resample from one ChaCha8 stream, take medians, then interpolate linearly
/// between order statistics at `(R - 1)·q`.
fn scripted_bootstrap(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median_of = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
    };
    let mut rng = common::rng(seed);
    let mut medians = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut draw: Vec<f64> = (0..n).map(|_| sorted[rng.random_range(0..n)]).collect();
        medians.push(median_of(&mut draw));
    }
    medians.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| {
        let h = (resamples - 1) as f64 * q;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        medians[lo] + (h - lo as f64) * (medians[hi] - medians[lo])
    };
    let m = median_of(&mut sorted.clone());
    let a = 1.0 - confidence;
    (pct(a / 2.0).min(m), pct(1.0 - a / 2.0).max(m))
}

#[test]
fn interval_matches_scripted_replay() {
    let mut r = common::rng(77);
    for case in 0..40 {
        let n = r.random_range(1..20);
        let values: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(1..=5))).collect();
        let confidence = [0.5, 0.8, 0.9, 0.95, 0.99][case % 5];
        let seed = r.random();
        let got = bootstrap_median_ci(&values, 1000, confidence, seed).unwrap();
        let want = scripted_bootstrap(&values, 1000, confidence, seed);
        assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12, "case {case}: {got:?} vs {want:?} for {values:?}");
    }
}
