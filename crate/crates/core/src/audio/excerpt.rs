use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rms_dbfs_of, AudioBuffer, AudioError, Result};

/// Upper bound on random offsets tried before giving up.
pub const MAX_EXCERPT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcerptRequest {
    pub duration_s: f64,
    /// The target RMS inside the window must exceed this level (dBFS).
    pub threshold_db: f64,
    pub seed: u64,
}

impl Default for ExcerptRequest {
    fn default() -> Self {
        Self { duration_s: 5.0, threshold_db: -30.0, seed: 0 }
    }
}

impl ExcerptRequest {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.duration_s * f64::from(sample_rate)).round() as usize
    }
}

/// Draws uniformly distributed window offsets from a ChaCha8 stream seeded with
/// `request.seed` until the target's RMS in the window exceeds the threshold.
///
/// Returns the offset in samples. The mixture is only checked for matching
/// geometry; callers cut it at the same offset.
pub fn select_excerpt(target: &AudioBuffer, mixture: &AudioBuffer, request: &ExcerptRequest) -> Result<usize> {
    if target.sample_rate() != mixture.sample_rate() {
        return Err(AudioError::RateMismatch(target.sample_rate(), mixture.sample_rate()));
    }
    if target.len() != mixture.len() {
        return Err(AudioError::LengthMismatch(target.len(), mixture.len()));
    }
    if !(request.duration_s > 0.0) {
        return Err(AudioError::InvalidParameter("excerpt duration must be positive".into()));
    }
    let window = request.window_len(target.sample_rate()).max(1);
    if window > target.len() {
        return Err(AudioError::BufferTooShort { needed: window, actual: target.len() });
    }

    let max_offset = target.len() - window;
    let samples = target.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    for _ in 0..MAX_EXCERPT_DRAWS {
        let offset = rng.random_range(0..=max_offset);
        if rms_dbfs_of(&samples[offset..offset + window])? > request.threshold_db {
            return Ok(offset);
        }
    }
    Err(AudioError::NoQualifyingExcerpt { threshold_db: request.threshold_db, draws: MAX_EXCERPT_DRAWS })
}
