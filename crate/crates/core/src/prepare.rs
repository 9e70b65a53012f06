//! Stimulus preparation: mono mixdown followed by loudness normalization.

use std::path::Path;

use thiserror::Error;

use crate::audio::{load_wav, mixdown_mono, AudioBuffer, AudioError};
use crate::loudness::{normalize_loudness, LoudnessError, LoudnessResult};

/// Loudness used for listening-test stimuli.
pub const DEFAULT_TARGET_LUFS: f64 = -18.0;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Loudness(#[from] LoudnessError),
}

/// Averages the channels to mono, then scales the result to `target_lufs`.
pub fn prepare_channels(channels: &[AudioBuffer], target_lufs: f64) -> Result<(AudioBuffer, LoudnessResult), PrepareError> {
    let mono = mixdown_mono(channels)?;
    Ok(normalize_loudness(&mono, target_lufs)?)
}

pub fn prepare_file(path: impl AsRef<Path>, target_lufs: f64) -> Result<(AudioBuffer, LoudnessResult), PrepareError> {
    prepare_channels(&load_wav(path)?, target_lufs)
}
