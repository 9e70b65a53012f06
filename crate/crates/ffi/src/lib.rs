//! C ABI over the `svseval` metric core.
//!
//! Audio buffers and embedding sequences cross the boundary as opaque handles
//! that the caller releases with the matching `*_free` function. Every fallible
//! function returns an [`SvsStatus`]; on failure a description is available from
//! [`svs_last_error_message`] on the same thread. Panics are caught and reported
//! as `SVS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use svseval::audio::{load_wav, mixdown_mono, AudioBuffer, AudioError};
use svseval::bsseval::{self, BssEvalError, ProjectionConfig};
use svseval::correlation::{self, CorrelationError};
use svseval::embedding::{self, read_embeddings, EmbeddingError, EmbeddingSequence, Ridge};
use svseval::loudness::{integrated_loudness, LoudnessError};
use svseval::spectral::{mr_stft_loss, MrStftConfig, SpectralError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    RateMismatch = 4,
    ZeroReference = 5,
    BufferTooShort = 6,
    SingularSystem = 7,
    Io = 8,
    Format = 9,
    Undefined = 10,
    BelowGate = 11,
    Panic = 12,
}

/// Mono audio buffer.
pub struct SvsAudio {
    inner: AudioBuffer,
}

/// Embedding frame sequence.
pub struct SvsEmbedding {
    inner: EmbeddingSequence,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SvsStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(SvsStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<AudioError> for Failure {
    fn from(e: AudioError) -> Self {
        let status = match e {
            AudioError::Io(_) => SvsStatus::Io,
            AudioError::UnsupportedEncoding(_) | AudioError::CorruptHeader(_) | AudioError::EmptyFile => {
                SvsStatus::Format
            }
            AudioError::LengthMismatch(..) => SvsStatus::LengthMismatch,
            AudioError::RateMismatch(..) => SvsStatus::RateMismatch,
            AudioError::BufferTooShort { .. } => SvsStatus::BufferTooShort,
            _ => SvsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<BssEvalError> for Failure {
    fn from(e: BssEvalError) -> Self {
        let status = match e {
            BssEvalError::LengthMismatch(..) => SvsStatus::LengthMismatch,
            BssEvalError::RateMismatch(..) => SvsStatus::RateMismatch,
            BssEvalError::ZeroReference => SvsStatus::ZeroReference,
            BssEvalError::BufferTooShort { .. } => SvsStatus::BufferTooShort,
            BssEvalError::SingularSystem => SvsStatus::SingularSystem,
            BssEvalError::InvalidConfig(_) => SvsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Audio(a) => a.into(),
            SpectralError::LengthMismatch(..) | SpectralError::GeometryMismatch(..) => {
                Failure(SvsStatus::LengthMismatch, e.to_string())
            }
            SpectralError::ZeroTarget => Failure(SvsStatus::ZeroReference, e.to_string()),
            SpectralError::BufferTooShort { .. } => Failure(SvsStatus::BufferTooShort, e.to_string()),
            SpectralError::InvalidConfig(_) => Failure(SvsStatus::InvalidArgument, e.to_string()),
        }
    }
}

impl From<EmbeddingError> for Failure {
    fn from(e: EmbeddingError) -> Self {
        let status = match e {
            EmbeddingError::Io(_) => SvsStatus::Io,
            EmbeddingError::BadMagic
            | EmbeddingError::UnsupportedVersion(_)
            | EmbeddingError::UnsupportedDtype(_)
            | EmbeddingError::TruncatedHeader
            | EmbeddingError::TruncatedPayload { .. }
            | EmbeddingError::TrailingBytes(_)
            | EmbeddingError::DimensionOverflow { .. }
            | EmbeddingError::InvalidEncoderId => SvsStatus::Format,
            EmbeddingError::DimensionMismatch(..) => SvsStatus::LengthMismatch,
            EmbeddingError::TooFewFrames(_) => SvsStatus::BufferTooShort,
            _ => SvsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<LoudnessError> for Failure {
    fn from(e: LoudnessError) -> Self {
        let status = match e {
            LoudnessError::TooShort(_) => SvsStatus::BufferTooShort,
            LoudnessError::AllBlocksGated => SvsStatus::BelowGate,
            LoudnessError::ToleranceNotReached(_) => SvsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<CorrelationError> for Failure {
    fn from(e: CorrelationError) -> Self {
        let status = match e {
            CorrelationError::LengthMismatch(..) => SvsStatus::LengthMismatch,
            CorrelationError::TooFewPoints(_) => SvsStatus::BufferTooShort,
            CorrelationError::Undefined => SvsStatus::Undefined,
            _ => SvsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SvsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SvsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SvsStatus::Panic
        }
    }
}

unsafe fn audio_ref<'a>(p: *const SvsAudio, what: &str) -> Result<&'a AudioBuffer, Failure> {
    p.as_ref().map(|a| &a.inner).ok_or_else(|| Failure::null(what))
}

unsafe fn emb_ref<'a>(p: *const SvsEmbedding, what: &str) -> Result<&'a EmbeddingSequence, Failure> {
    p.as_ref().map(|e| &e.inner).ok_or_else(|| Failure::null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SvsStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn projection(filter_length: usize) -> ProjectionConfig {
    ProjectionConfig { filter_length, ..ProjectionConfig::default() }
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn svs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `len` samples into a new buffer.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_audio_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut SvsAudio,
) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let data = slice_arg(samples, len, "samples")?.to_vec();
        let inner = AudioBuffer::new(data, sample_rate)?;
        *out = Box::into_raw(Box::new(SvsAudio { inner }));
        Ok(())
    })
}

/// Loads a WAV file and averages its channels to mono.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_audio_load_wav(path: *const c_char, out: *mut *mut SvsAudio) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = mixdown_mono(&load_wav(path_arg(path)?)?)?;
        *out = Box::into_raw(Box::new(SvsAudio { inner }));
        Ok(())
    })
}

/// # Safety
/// `audio` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svs_audio_free(audio: *mut SvsAudio) {
    if !audio.is_null() {
        drop(Box::from_raw(audio));
    }
}

/// Sample count, or 0 for a null handle.
///
/// # Safety
/// `audio` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svs_audio_len(audio: *const SvsAudio) -> usize {
    audio.as_ref().map_or(0, |a| a.inner.len())
}

/// # Safety
/// `audio` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svs_audio_sample_rate(audio: *const SvsAudio) -> u32 {
    audio.as_ref().map_or(0, |a| a.inner.sample_rate())
}

/// Scale-invariant SDR in dB (capped at 300).
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_si_sdr(estimate: *const SvsAudio, reference: *const SvsAudio, out_db: *mut f64) -> SvsStatus {
    guard(|| {
        let out = out_ref(out_db, "out_db")?;
        *out = bsseval::si_sdr(audio_ref(estimate, "estimate")?, audio_ref(reference, "reference")?)?;
        Ok(())
    })
}

/// SDR after an FIR projection with `filter_length` taps.
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_sdr_fir(
    estimate: *const SvsAudio,
    reference: *const SvsAudio,
    filter_length: usize,
    out_db: *mut f64,
) -> SvsStatus {
    guard(|| {
        let out = out_ref(out_db, "out_db")?;
        *out = bsseval::sdr_fir(
            audio_ref(estimate, "estimate")?,
            audio_ref(reference, "reference")?,
            &projection(filter_length),
        )?;
        Ok(())
    })
}

/// BSS-Eval SDR, SIR and SAR. With no interference references SIR and SAR are
/// written as NaN.
///
/// # Safety
/// `interference` must point to `n_interference` live handles; the output
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_bss_eval_sources(
    estimate: *const SvsAudio,
    target: *const SvsAudio,
    interference: *const *const SvsAudio,
    n_interference: usize,
    filter_length: usize,
    out_sdr: *mut f64,
    out_sir: *mut f64,
    out_sar: *mut f64,
) -> SvsStatus {
    guard(|| {
        let sdr = out_ref(out_sdr, "out_sdr")?;
        let sir = out_ref(out_sir, "out_sir")?;
        let sar = out_ref(out_sar, "out_sar")?;
        let interf: Vec<AudioBuffer> = slice_arg(interference, n_interference, "interference")?
            .iter()
            .map(|&p| audio_ref(p, "interference entry").cloned())
            .collect::<Result<_, _>>()?;
        let r = bsseval::bss_eval_sources(
            audio_ref(estimate, "estimate")?,
            audio_ref(target, "target")?,
            &interf,
            &projection(filter_length),
        )?;
        *sdr = r.sdr;
        *sir = r.sir.unwrap_or(f64::NAN);
        *sar = r.sar.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// A-weighted multi-resolution STFT loss with default settings.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_mr_stft_loss(estimate: *const SvsAudio, target: *const SvsAudio, out: *mut f64) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = mr_stft_loss(audio_ref(estimate, "estimate")?, audio_ref(target, "target")?, &MrStftConfig::default())?.total;
        Ok(())
    })
}

/// Integrated loudness in LUFS. Returns `SVS_STATUS_BELOW_GATE` when no block
/// passes the absolute gate.
///
/// # Safety
/// `audio` must be live; `out_lufs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_integrated_loudness(audio: *const SvsAudio, out_lufs: *mut f64) -> SvsStatus {
    guard(|| {
        let out = out_ref(out_lufs, "out_lufs")?;
        match integrated_loudness(audio_ref(audio, "audio")?)?.lufs() {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err(Failure(SvsStatus::BelowGate, "no gating block above -70 LUFS".into())),
        }
    })
}

/// Builds a sequence from `frames × dims` frame-major floats.
///
/// # Safety
/// `data` must hold `frames * dims` floats, `encoder_id` must be a
/// NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_new(
    data: *const f32,
    frames: usize,
    dims: usize,
    encoder_id: *const c_char,
    frame_rate: f32,
    out: *mut *mut SvsEmbedding,
) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let n = frames
            .checked_mul(dims)
            .ok_or_else(|| Failure(SvsStatus::InvalidArgument, "frames * dims overflows".into()))?;
        let values = slice_arg(data, n, "data")?;
        let rows: Vec<Vec<f64>> = values.chunks(dims.max(1)).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let id = path_arg(encoder_id).map_err(|Failure(s, _)| Failure(s, "encoder_id is null or not UTF-8".into()))?;
        let inner = EmbeddingSequence::from_rows(&rows, id, frame_rate)?;
        *out = Box::into_raw(Box::new(SvsEmbedding { inner }));
        Ok(())
    })
}

/// Reads an `EMB1` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_load(path: *const c_char, out: *mut *mut SvsEmbedding) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = read_embeddings(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SvsEmbedding { inner }));
        Ok(())
    })
}

/// # Safety
/// `emb` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_free(emb: *mut SvsEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_frames(emb: *const SvsEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.frame_count())
}

/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_dims(emb: *const SvsEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.dims())
}

/// Fréchet distance between Gaussians fitted to the two sequences, with the
/// default trace-relative ridge.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_fad_song2song(
    reference: *const SvsEmbedding,
    estimate: *const SvsEmbedding,
    out: *mut f64,
) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = embedding::fad_song2song(emb_ref(reference, "reference")?, emb_ref(estimate, "estimate")?, Ridge::default())?;
        Ok(())
    })
}

/// Mean squared error between time-aligned frames.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_embedding_mse(
    reference: *const SvsEmbedding,
    estimate: *const SvsEmbedding,
    out: *mut f64,
) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = embedding::embedding_mse(emb_ref(reference, "reference")?, emb_ref(estimate, "estimate")?)?;
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` arrays. Returns
/// `SVS_STATUS_UNDEFINED` when either input is constant.
///
/// # Safety
/// `x` and `y` must each point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svs_srcc(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SvsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = correlation::srcc(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        Ok(())
    })
}
