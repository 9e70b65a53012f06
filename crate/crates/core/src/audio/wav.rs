use std::path::Path;

use super::{mixdown_mono, AudioBuffer, AudioError, Result};

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

impl SampleFormat {
    fn spec(self, channels: u16, sample_rate: u32) -> hound::WavSpec {
        let (bits_per_sample, sample_format) = match self {
            SampleFormat::Pcm16 => (16, hound::SampleFormat::Int),
            SampleFormat::Pcm24 => (24, hound::SampleFormat::Int),
            SampleFormat::Float32 => (32, hound::SampleFormat::Float),
        };
        hound::WavSpec { channels, sample_rate, bits_per_sample, sample_format }
    }
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        // hound reports short reads as `Other` ("Failed to read enough bytes").
        hound::Error::IoError(e) if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) => {
            AudioError::CorruptHeader(format!("truncated file: {e}"))
        }
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.into()),
        hound::Error::UnfinishedSample => AudioError::CorruptHeader("truncated sample data".into()),
        hound::Error::TooWide => AudioError::UnsupportedEncoding("sample width too large".into()),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("unsupported WAV feature".into()),
        hound::Error::InvalidSampleFormat => AudioError::UnsupportedEncoding("invalid sample format".into()),
    }
}

/// Reads a RIFF/WAVE file, one [`AudioBuffer`] per channel.
///
/// PCM16 is divided by 32768 and PCM24 by 8388608; float32 is taken as is.
/// No mixdown is applied.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Vec<AudioBuffer>> {
    let path = path.as_ref();
    if std::fs::metadata(path)?.len() == 0 {
        return Err(AudioError::EmptyFile);
    }
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut reader = hound::WavReader::new(file).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(AudioError::CorruptHeader("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16 | 24) => {
            let scale = f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    if interleaved.is_empty() {
        return Err(AudioError::EmptyFile);
    }
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::CorruptHeader("sample count not a multiple of channel count".into()));
    }

    (0..channels)
        .map(|c| {
            let samples = interleaved.iter().skip(c).step_by(channels).copied().collect();
            AudioBuffer::new(samples, spec.sample_rate)
        })
        .collect()
}

/// [`load_wav`] followed by [`mixdown_mono`].
pub fn load_wav_mono(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    mixdown_mono(&load_wav(path)?)
}

/// Writes equally long channels as an interleaved WAV file.
///
/// Integer formats clip to the representable range.
pub fn write_wav(path: impl AsRef<Path>, channels: &[AudioBuffer], format: SampleFormat) -> Result<()> {
    std::fs::write(path, encode_wav(channels, format)?)?;
    Ok(())
}

/// Encodes interleaved channels as a complete WAV byte stream.
pub fn encode_wav(channels: &[AudioBuffer], format: SampleFormat) -> Result<Vec<u8>> {
    let first = channels.first().ok_or(AudioError::EmptyBuffer)?;
    for ch in channels {
        if ch.sample_rate() != first.sample_rate() {
            return Err(AudioError::RateMismatch(first.sample_rate(), ch.sample_rate()));
        }
        if ch.len() != first.len() {
            return Err(AudioError::LengthMismatch(first.len(), ch.len()));
        }
    }
    let n_channels = u16::try_from(channels.len())
        .map_err(|_| AudioError::InvalidParameter("too many channels".into()))?;
    let spec = format.spec(n_channels, first.sample_rate());
    let mut out = std::io::Cursor::new(Vec::new());
    let mut writer = hound::WavWriter::new(&mut out, spec).map_err(map_hound)?;

    for i in 0..first.len() {
        for ch in channels {
            let x = ch.samples()[i];
            match format {
                SampleFormat::Float32 => writer.write_sample(x as f32),
                SampleFormat::Pcm16 => writer.write_sample(quantize(x, 16)),
                SampleFormat::Pcm24 => writer.write_sample(quantize(x, 24)),
            }
            .map_err(map_hound)?;
        }
    }
    writer.finalize().map_err(map_hound)?;
    Ok(out.into_inner())
}

fn quantize(x: f64, bits: u32) -> i32 {
    let scale = f64::from(1u32 << (bits - 1));
    (x * scale).round().clamp(-scale, scale - 1.0) as i32
}
