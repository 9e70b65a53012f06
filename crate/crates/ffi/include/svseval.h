#ifndef SVSEVAL_H
#define SVSEVAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvsStatus {
  SVS_STATUS_OK = 0,
  SVS_STATUS_NULL_POINTER = 1,
  SVS_STATUS_INVALID_ARGUMENT = 2,
  SVS_STATUS_LENGTH_MISMATCH = 3,
  SVS_STATUS_RATE_MISMATCH = 4,
  SVS_STATUS_ZERO_REFERENCE = 5,
  SVS_STATUS_BUFFER_TOO_SHORT = 6,
  SVS_STATUS_SINGULAR_SYSTEM = 7,
  SVS_STATUS_IO = 8,
  SVS_STATUS_FORMAT = 9,
  SVS_STATUS_UNDEFINED = 10,
  SVS_STATUS_BELOW_GATE = 11,
  SVS_STATUS_PANIC = 12,
} SvsStatus;

// Mono audio buffer.
typedef struct SvsAudio SvsAudio;

// Embedding frame sequence.
typedef struct SvsEmbedding SvsEmbedding;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *svs_last_error_message(void);

// Copies `len` samples into a new buffer.
//
// # Safety
// `samples` must point to `len` readable doubles; `out` must be writable.
enum SvsStatus svs_audio_new(const double *samples,
                             size_t len,
                             uint32_t sample_rate,
                             struct SvsAudio **out);

// Loads a WAV file and averages its channels to mono.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SvsStatus svs_audio_load_wav(const char *path, struct SvsAudio **out);

// # Safety
// `audio` must be null or a handle from this library that was not yet freed.
void svs_audio_free(struct SvsAudio *audio);

// Sample count, or 0 for a null handle.
//
// # Safety
// `audio` must be null or a live handle.
size_t svs_audio_len(const struct SvsAudio *audio);

// # Safety
// `audio` must be null or a live handle.
uint32_t svs_audio_sample_rate(const struct SvsAudio *audio);

// Scale-invariant SDR in dB (capped at 300).
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum SvsStatus svs_si_sdr(const struct SvsAudio *estimate,
                          const struct SvsAudio *reference,
                          double *out_db);

// SDR after an FIR projection with `filter_length` taps.
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum SvsStatus svs_sdr_fir(const struct SvsAudio *estimate,
                           const struct SvsAudio *reference,
                           size_t filter_length,
                           double *out_db);

// BSS-Eval SDR, SIR and SAR. With no interference references SIR and SAR are
// written as NaN.
//
// # Safety
// `interference` must point to `n_interference` live handles; the output
// pointers must be writable.
enum SvsStatus svs_bss_eval_sources(const struct SvsAudio *estimate,
                                    const struct SvsAudio *target,
                                    const struct SvsAudio *const *interference,
                                    size_t n_interference,
                                    size_t filter_length,
                                    double *out_sdr,
                                    double *out_sir,
                                    double *out_sar);

// A-weighted multi-resolution STFT loss with default settings.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SvsStatus svs_mr_stft_loss(const struct SvsAudio *estimate,
                                const struct SvsAudio *target,
                                double *out);

// Integrated loudness in LUFS. Returns `SVS_STATUS_BELOW_GATE` when no block
// passes the absolute gate.
//
// # Safety
// `audio` must be live; `out_lufs` must be writable.
enum SvsStatus svs_integrated_loudness(const struct SvsAudio *audio, double *out_lufs);

// Builds a sequence from `frames × dims` frame-major floats.
//
// # Safety
// `data` must hold `frames * dims` floats, `encoder_id` must be a
// NUL-terminated string and `out` writable.
enum SvsStatus svs_embedding_new(const float *data,
                                 size_t frames,
                                 size_t dims,
                                 const char *encoder_id,
                                 float frame_rate,
                                 struct SvsEmbedding **out);

// Reads an `EMB1` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SvsStatus svs_embedding_load(const char *path, struct SvsEmbedding **out);

// # Safety
// `emb` must be null or a handle from this library that was not yet freed.
void svs_embedding_free(struct SvsEmbedding *emb);

// # Safety
// `emb` must be null or a live handle.
size_t svs_embedding_frames(const struct SvsEmbedding *emb);

// # Safety
// `emb` must be null or a live handle.
size_t svs_embedding_dims(const struct SvsEmbedding *emb);

// Fréchet distance between Gaussians fitted to the two sequences, with the
// default trace-relative ridge.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SvsStatus svs_fad_song2song(const struct SvsEmbedding *reference,
                                 const struct SvsEmbedding *estimate,
                                 double *out);

// Mean squared error between time-aligned frames.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SvsStatus svs_embedding_mse(const struct SvsEmbedding *reference,
                                 const struct SvsEmbedding *estimate,
                                 double *out);

// Spearman rank correlation of two length-`n` arrays. Returns
// `SVS_STATUS_UNDEFINED` when either input is constant.
//
// # Safety
// `x` and `y` must each point to `n` doubles; `out` must be writable.
enum SvsStatus svs_srcc(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVSEVAL_H */
