//! Integrated loudness (ITU-R BS.1770-4 / EBU R128) and gain normalization.
//!
//! Only mono programme material is measured here; the channel weight is 1.0.
//! The K-weighting biquads are derived for the buffer's own sample rate from the
//! analog prototype through the bilinear transform, which reproduces the
//! 48 kHz coefficients tabulated in the standard.

use thiserror::Error;

use crate::audio::AudioBuffer;

const ABSOLUTE_GATE_LUFS: f64 = -70.0;
const RELATIVE_GATE_LU: f64 = -10.0;
const BLOCK_SECS: f64 = 0.4;
const STEP_SECS: f64 = 0.1;

/// Maximum number of gain corrections in [`normalize_loudness`].
pub const MAX_GAIN_ITERATIONS: usize = 3;
/// Re-measured loudness must land within this many LU of the target.
pub const NORMALIZATION_TOLERANCE_LU: f64 = 0.2;

#[derive(Debug, Error)]
pub enum LoudnessError {
    #[error("signal shorter than one 400 ms gating block ({0:.3} s)")]
    TooShort(f64),
    #[error("every gating block falls below the absolute gate")]
    AllBlocksGated,
    #[error("normalization ended {0:.3} LU away from the target")]
    ToleranceNotReached(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratedLoudness {
    Lufs(f64),
    /// No block exceeded the −70 LUFS absolute gate.
    BelowGate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoudnessResult {
    pub integrated: IntegratedLoudness,
    pub gated_block_count: usize,
    /// Gain applied by [`normalize_loudness`]; zero for plain measurements.
    pub applied_gain_db: f64,
}

impl LoudnessResult {
    pub fn lufs(&self) -> Option<f64> {
        match self.integrated {
            IntegratedLoudness::Lufs(v) => Some(v),
            IntegratedLoudness::BelowGate => None,
        }
    }
}

/// Direct-form-I biquad with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Stage 1 of the K-weighting pre-filter (head-related high shelf).
    pub fn k_shelf(sample_rate: f64) -> Self {
        let f0 = 1681.974450955533;
        let gain_db = 3.999843853973347;
        let q = 0.7071752369554196;
        let k = (std::f64::consts::PI * f0 / sample_rate).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.4996667741545416);
        let a0 = 1.0 + k / q + k * k;
        Self {
            b: [(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        }
    }

    /// Stage 2 of the K-weighting pre-filter (RLB high-pass).
    pub fn k_highpass(sample_rate: f64) -> Self {
        let f0 = 38.13547087602444;
        let q = 0.5003270373238773;
        let k = (std::f64::consts::PI * f0 / sample_rate).tan();
        let a0 = 1.0 + k / q + k * k;
        Self { b: [1.0, -2.0, 1.0], a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0] }
    }

    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        input
            .iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

fn k_weight(buffer: &AudioBuffer) -> Vec<f64> {
    let sr = f64::from(buffer.sample_rate());
    Biquad::k_highpass(sr).filter(&Biquad::k_shelf(sr).filter(buffer.samples()))
}

fn block_loudness(mean_square: f64) -> f64 {
    -0.691 + 10.0 * mean_square.log10()
}

/// Mean square of every 400 ms block (75 % overlap) of the K-weighted signal.
fn block_powers(buffer: &AudioBuffer) -> Result<Vec<f64>, LoudnessError> {
    let sr = f64::from(buffer.sample_rate());
    let block = (BLOCK_SECS * sr).round() as usize;
    let step = ((STEP_SECS * sr).round() as usize).max(1);
    if buffer.len() < block || block == 0 {
        return Err(LoudnessError::TooShort(buffer.duration_secs()));
    }
    let weighted = k_weight(buffer);
    let count = 1 + (weighted.len() - block) / step;
    Ok((0..count)
        .map(|j| weighted[j * step..j * step + block].iter().map(|z| z * z).sum::<f64>() / block as f64)
        .collect())
}

/// Gated integrated loudness of a mono buffer.
pub fn integrated_loudness(buffer: &AudioBuffer) -> Result<LoudnessResult, LoudnessError> {
    let powers = block_powers(buffer)?;
    let above_abs: Vec<f64> =
        powers.into_iter().filter(|&p| p > 0.0 && block_loudness(p) > ABSOLUTE_GATE_LUFS).collect();
    if above_abs.is_empty() {
        return Ok(LoudnessResult {
            integrated: IntegratedLoudness::BelowGate,
            gated_block_count: 0,
            applied_gain_db: 0.0,
        });
    }
    let abs_mean = above_abs.iter().sum::<f64>() / above_abs.len() as f64;
    let relative_gate = block_loudness(abs_mean) + RELATIVE_GATE_LU;
    let gated: Vec<f64> = above_abs.into_iter().filter(|&p| block_loudness(p) > relative_gate).collect();
    let mean = gated.iter().sum::<f64>() / gated.len() as f64;
    Ok(LoudnessResult {
        integrated: IntegratedLoudness::Lufs(block_loudness(mean)),
        gated_block_count: gated.len(),
        applied_gain_db: 0.0,
    })
}

fn measure(buffer: &AudioBuffer) -> Result<(f64, usize), LoudnessError> {
    let r = integrated_loudness(buffer)?;
    r.lufs().map(|l| (l, r.gated_block_count)).ok_or(LoudnessError::AllBlocksGated)
}

/// Scales `buffer` by a single gain so that its integrated loudness lands on
/// `target_lufs`.
///
/// The gain is refined at most [`MAX_GAIN_ITERATIONS`] times because the absolute
/// gate can admit or drop blocks after scaling. Samples beyond full scale are kept
/// and logged.
pub fn normalize_loudness(
    buffer: &AudioBuffer,
    target_lufs: f64,
) -> Result<(AudioBuffer, LoudnessResult), LoudnessError> {
    let (mut measured, mut blocks) = measure(buffer)?;
    let mut gain_db = 0.0;
    let mut out = buffer.clone();
    for _ in 0..MAX_GAIN_ITERATIONS {
        let err = target_lufs - measured;
        if err.abs() < 1e-3 {
            break;
        }
        gain_db += err;
        out = buffer.scaled(10f64.powf(gain_db / 20.0));
        (measured, blocks) = measure(&out)?;
    }
    let miss = measured - target_lufs;
    if miss.abs() > NORMALIZATION_TOLERANCE_LU {
        return Err(LoudnessError::ToleranceNotReached(miss));
    }
    let peak = out.peak();
    if peak > 1.0 {
        log::warn!("loudness normalization clips: peak {:.2} dBFS after {gain_db:+.2} dB", 20.0 * peak.log10());
    }
    Ok((
        out,
        LoudnessResult { integrated: IntegratedLoudness::Lufs(measured), gated_block_count: blocks, applied_gain_db: gain_db },
    ))
}
