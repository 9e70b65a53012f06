use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{AudioBuffer, AudioError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`, no amplitude normalization.
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window: Window,
    /// Reflect-pad the signal by `fft_size / 2` on both ends.
    pub center_padding: bool,
}

impl StftConfig {
    /// Hann window, 75 % overlap, centered frames.
    pub fn with_fft_size(fft_size: usize) -> Self {
        Self { fft_size, hop_size: (fft_size / 4).max(1), window: Window::Hann, center_padding: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 {
            return Err(AudioError::InvalidParameter(format!("fft_size {} < 2", self.fft_size)));
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return Err(AudioError::InvalidParameter(format!(
                "hop_size {} outside 1..={}",
                self.hop_size, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        let padded = if self.center_padding { len + 2 * (self.fft_size / 2) } else { len };
        (padded >= self.fft_size).then(|| 1 + (padded - self.fft_size) / self.hop_size)
    }
}

/// One-sided complex STFT, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Vec<Complex64>,
    frames: usize,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn bin_count(&self) -> usize {
        self.config.bin_count()
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, m: usize) -> &[Complex64] {
        let k = self.bin_count();
        &self.bins[m * k..(m + 1) * k]
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.frame(frame)[bin]
    }

    /// All bins, frame-major.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.bins
    }

    /// `|X|` for every bin, frame-major.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    out
}

/// Hann-windowed one-sided STFT. Frame `m` covers `[m·hop, m·hop + fft_size)` of the
/// (optionally reflect-padded) signal.
pub fn stft(buffer: &AudioBuffer, config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let x = buffer.samples();
    let n_fft = config.fft_size;
    let padded;
    let signal: &[f64] = if config.center_padding {
        let pad = n_fft / 2;
        if x.len() <= pad {
            return Err(AudioError::BufferTooShort { needed: pad + 1, actual: x.len() });
        }
        padded = reflect_pad(x, pad);
        &padded
    } else {
        if x.len() < n_fft {
            return Err(AudioError::BufferTooShort { needed: n_fft, actual: x.len() });
        }
        x
    };

    let frames = 1 + (signal.len() - n_fft) / config.hop_size;
    let k = config.bin_count();
    let window = config.window.coefficients(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut frame_buf = vec![Complex64::default(); n_fft];
    let mut bins = Vec::with_capacity(frames * k);

    for m in 0..frames {
        let start = m * config.hop_size;
        for (dst, (&s, &w)) in frame_buf.iter_mut().zip(signal[start..start + n_fft].iter().zip(&window)) {
            *dst = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut frame_buf, &mut scratch);
        bins.extend_from_slice(&frame_buf[..k]);
    }

    Ok(Spectrogram { bins, frames, config: *config, sample_rate: buffer.sample_rate() })
}
