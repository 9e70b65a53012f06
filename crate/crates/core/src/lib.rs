//! Quality evaluation for singing voice separation.
//!
//! Intrusive objective metrics (BSS-Eval projections, SI-SDR, multi-resolution
//! STFT loss, embedding Fréchet distance and MSE), tooling for Degradation
//! Category Rating listening studies, and rank-correlation analysis between the
//! two.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod bsseval;
pub mod correlation;
pub mod embedding;
pub mod loudness;
pub mod pipeline;
pub mod prepare;
#[cfg(feature = "service")]
pub mod service;
pub mod spectral;
pub mod study;
