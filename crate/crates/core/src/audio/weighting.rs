use super::{AudioError, Result, StftConfig};

// IEC 61672-1 pole frequencies in Hz.
const F1: f64 = 20.598_997;
const F2: f64 = 107.652_65;
const F3: f64 = 737.862_23;
const F4: f64 = 12_194.217;

fn r_a(f: f64) -> f64 {
    let f2 = f * f;
    let num = F4 * F4 * f2 * f2;
    let den = (f2 + F1 * F1) * ((f2 + F2 * F2) * (f2 + F3 * F3)).sqrt() * (f2 + F4 * F4);
    num / den
}

/// Analog A-weighting magnitude at `freq_hz`, normalized to 1.0 at 1 kHz.
pub fn a_weighting_response(freq_hz: f64) -> f64 {
    if freq_hz <= 0.0 {
        return 0.0;
    }
    r_a(freq_hz) / r_a(1000.0)
}

/// Linear A-weighting gain for each one-sided STFT bin `k`, sampled at
/// `k · sample_rate / fft_size`.
pub fn a_weighting_gains(config: &StftConfig, sample_rate: u32) -> Result<Vec<f64>> {
    if sample_rate == 0 {
        return Err(AudioError::InvalidParameter("sample rate must be positive".into()));
    }
    let bin_hz = f64::from(sample_rate) / config.fft_size as f64;
    Ok((0..config.bin_count()).map(|k| a_weighting_response(k as f64 * bin_hz)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(g: f64) -> f64 {
        20.0 * g.log10()
    }

    #[test]
    fn reference_points() {
        assert!((a_weighting_response(1000.0) - 1.0).abs() < 1e-12);
        assert_eq!(a_weighting_response(0.0), 0.0);
        // IEC 61672-1 class tables: 100 Hz → −19.1 dB, 10 kHz → −2.5 dB, 31.5 Hz → −39.4 dB.
        assert!((db(a_weighting_response(100.0)) + 19.1).abs() < 0.3);
        assert!((db(a_weighting_response(10_000.0)) + 2.5).abs() < 0.3);
        assert!((db(a_weighting_response(31.5)) + 39.4).abs() < 0.3);
    }

    #[test]
    fn bin_gains() {
        let cfg = StftConfig::with_fft_size(4096);
        let gains = a_weighting_gains(&cfg, 44100).unwrap();
        assert_eq!(gains.len(), 2049);
        assert_eq!(gains[0], 0.0);
        let bin_1k = (1000.0 * 4096.0 / 44100.0f64).round() as usize;
        assert!((gains[bin_1k] - 1.0).abs() < 0.01);
        assert!(a_weighting_gains(&cfg, 0).is_err());
    }

    #[test]
    fn nonnegative_and_unimodal() {
        let cfg = StftConfig::with_fft_size(2048);
        let sr = 44100;
        let gains = a_weighting_gains(&cfg, sr).unwrap();
        assert!(gains.iter().all(|&g| g >= 0.0));
        let peak = gains.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let peak_hz = peak as f64 * f64::from(sr) / 2048.0;
        assert!((1000.0..=8000.0).contains(&peak_hz), "peak at {peak_hz}");
        assert!(gains[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(gains[peak..].windows(2).all(|w| w[0] >= w[1]));
    }
}
