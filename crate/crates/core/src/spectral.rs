//! A-weighted multi-resolution STFT loss.
//!
//! Per resolution the loss is a spectral-convergence term plus a log-magnitude
//! L1 term:
//!
//! ```text
//! L_j = ‖ |X| − |X̂| ‖_F / ‖ |X| ‖_F  +  (1/M) · Σ_{m,k} | ln|X| − ln|X̂| |
//! ```
//!
//! where `X` is the target STFT, `X̂` the estimate and `M` the number of frames.
//! Magnitudes are multiplied by per-bin A-weighting gains and floored before
//! either term is evaluated. The reported loss is the mean of `L_j` over all
//! resolutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{a_weighting_gains, stft, AudioBuffer, AudioError, Spectrogram, StftConfig, Window};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("spectrogram geometry differs: {0:?} vs {1:?}")]
    GeometryMismatch((usize, usize), (usize, usize)),
    #[error("target spectrogram is identically zero")]
    ZeroTarget,
    #[error("signal lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signals of {actual} samples are shorter than the largest FFT ({needed})")]
    BufferTooShort { needed: usize, actual: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = SpectralError> = std::result::Result<T, E>;

/// Normalization of the log-magnitude L1 term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMagNorm {
    /// Divide by the frame count `M` only.
    #[default]
    Frames,
    /// Divide by `M · K`, i.e. a per-element mean.
    Elements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrStftConfig {
    pub fft_sizes: Vec<usize>,
    pub overlap: f64,
    pub a_weighting: bool,
    pub magnitude_floor: f64,
    pub log_norm: LogMagNorm,
    pub center_padding: bool,
}

impl Default for MrStftConfig {
    fn default() -> Self {
        Self {
            fft_sizes: vec![256, 512, 1024, 2048, 4096],
            overlap: 0.75,
            a_weighting: true,
            magnitude_floor: 1e-8,
            log_norm: LogMagNorm::Frames,
            center_padding: true,
        }
    }
}

impl MrStftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_sizes.is_empty() || self.fft_sizes.iter().any(|&n| n < 2) {
            return Err(SpectralError::InvalidConfig("fft_sizes must be non-empty and each ≥ 2".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SpectralError::InvalidConfig(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        if !(self.magnitude_floor > 0.0) {
            return Err(SpectralError::InvalidConfig("magnitude_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn stft_config(&self, fft_size: usize) -> StftConfig {
        let hop = ((fft_size as f64 * (1.0 - self.overlap)).round() as usize).clamp(1, fft_size);
        StftConfig { fft_size, hop_size: hop, window: Window::Hann, center_padding: self.center_padding }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionLoss {
    pub fft_size: usize,
    pub sc_term: f64,
    pub logmag_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_resolution: Vec<ResolutionLoss>,
    pub total: f64,
}

/// Spectral-convergence and log-magnitude terms for one resolution.
///
/// `weights` holds one gain per bin. The target goes in the denominator of the
/// spectral-convergence term, so the loss is not symmetric in its arguments.
pub fn stft_loss_single(
    estimate: &Spectrogram,
    target: &Spectrogram,
    floor: f64,
    weights: &[f64],
    norm: LogMagNorm,
) -> Result<(f64, f64)> {
    let geom = |s: &Spectrogram| (s.frame_count(), s.bin_count());
    if geom(estimate) != geom(target) {
        return Err(SpectralError::GeometryMismatch(geom(estimate), geom(target)));
    }
    let (frames, bins) = geom(target);
    if weights.len() != bins {
        return Err(SpectralError::InvalidConfig(format!("{} weights for {bins} bins", weights.len())));
    }
    if target.as_slice().iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(SpectralError::ZeroTarget);
    }

    let mut diff_sq = 0.0;
    let mut target_sq = 0.0;
    let mut log_l1 = 0.0;
    for m in 0..frames {
        for ((x, x_hat), w) in target.frame(m).iter().zip(estimate.frame(m)).zip(weights) {
            let a = (x.norm() * w).max(floor);
            let b = (x_hat.norm() * w).max(floor);
            diff_sq += (a - b) * (a - b);
            target_sq += a * a;
            log_l1 += (a.ln() - b.ln()).abs();
        }
    }
    let divisor = match norm {
        LogMagNorm::Frames => frames as f64,
        LogMagNorm::Elements => (frames * bins) as f64,
    };
    Ok((diff_sq.sqrt() / target_sq.sqrt(), log_l1 / divisor))
}

/// Mean of the per-resolution losses between `estimate` and `target`.
pub fn mr_stft_loss(estimate: &AudioBuffer, target: &AudioBuffer, config: &MrStftConfig) -> Result<LossBreakdown> {
    config.validate()?;
    if estimate.len() != target.len() {
        return Err(SpectralError::LengthMismatch(estimate.len(), target.len()));
    }
    if estimate.sample_rate() != target.sample_rate() {
        return Err(AudioError::RateMismatch(estimate.sample_rate(), target.sample_rate()).into());
    }
    let largest = config.fft_sizes.iter().copied().max().unwrap_or(0);
    if target.len() < largest {
        return Err(SpectralError::BufferTooShort { needed: largest, actual: target.len() });
    }

    let per_resolution = config
        .fft_sizes
        .par_iter()
        .map(|&fft_size| {
            let cfg = config.stft_config(fft_size);
            let weights = if config.a_weighting {
                a_weighting_gains(&cfg, target.sample_rate())?
            } else {
                vec![1.0; cfg.bin_count()]
            };
            let x = stft(target, &cfg)?;
            let x_hat = stft(estimate, &cfg)?;
            let (sc_term, logmag_term) = stft_loss_single(&x_hat, &x, config.magnitude_floor, &weights, config.log_norm)?;
            Ok(ResolutionLoss { fft_size, sc_term, logmag_term })
        })
        .collect::<Result<Vec<_>>>()?;

    let total = per_resolution.iter().map(|r| r.sc_term + r.logmag_term).sum::<f64>() / per_resolution.len() as f64;
    Ok(LossBreakdown { per_resolution, total })
}
