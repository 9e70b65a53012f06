//! Signal carrier, WAV I/O, mixdown, excerpt selection, STFT and A-weighting.
//!
//! Everything here is a pure function of its inputs. Samples are held as `f64`
//! with nominal full scale 1.0.

mod excerpt;
mod stft;
mod wav;
mod weighting;

pub use excerpt::{select_excerpt, ExcerptRequest, MAX_EXCERPT_DRAWS};
pub use stft::{stft, Spectrogram, StftConfig, Window};
pub use wav::{encode_wav, load_wav, load_wav_mono, write_wav, SampleFormat};
pub use weighting::{a_weighting_gains, a_weighting_response};

use thiserror::Error;

/// Errors raised by the audio layer.
#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("WAV file contains no samples")]
    EmptyFile,
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("channel lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample rates differ ({0} Hz vs {1} Hz)")]
    RateMismatch(u32, u32),
    #[error("buffer too short: need {needed} samples, have {actual}")]
    BufferTooShort { needed: usize, actual: usize },
    #[error("no excerpt above {threshold_db} dBFS found after {draws} draws")]
    NoQualifyingExcerpt { threshold_db: f64, draws: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// A single-channel block of samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Wraps `samples`. Fails on a zero sample rate or non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copies `len` samples starting at `offset`.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Self> {
        let end = offset.checked_add(len).filter(|&e| e <= self.samples.len()).ok_or(
            AudioError::BufferTooShort { needed: offset.saturating_add(len), actual: self.samples.len() },
        )?;
        Ok(Self { samples: self.samples[offset..end].to_vec(), sample_rate: self.sample_rate })
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Per-sample arithmetic mean across channels.
pub fn mixdown_mono(channels: &[AudioBuffer]) -> Result<AudioBuffer> {
    let first = channels.first().ok_or(AudioError::EmptyBuffer)?;
    for ch in &channels[1..] {
        if ch.sample_rate != first.sample_rate {
            return Err(AudioError::RateMismatch(first.sample_rate, ch.sample_rate));
        }
        if ch.len() != first.len() {
            return Err(AudioError::LengthMismatch(first.len(), ch.len()));
        }
    }
    if channels.len() == 1 {
        return Ok(first.clone());
    }
    let n = channels.len() as f64;
    let samples = (0..first.len())
        .map(|i| {
            // Sum in a fixed order of sorted values so channel order cannot change rounding.
            let mut column: Vec<f64> = channels.iter().map(|c| c.samples[i]).collect();
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect();
    Ok(AudioBuffer { samples, sample_rate: first.sample_rate })
}

/// RMS level relative to full scale 1.0. All-zero input yields `f64::NEG_INFINITY`.
pub fn rms_dbfs(buffer: &AudioBuffer) -> Result<f64> {
    rms_dbfs_of(buffer.samples())
}

pub(crate) fn rms_dbfs_of(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(AudioError::EmptyBuffer);
    }
    let mean_square = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    if mean_square == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * mean_square.log10())
}
