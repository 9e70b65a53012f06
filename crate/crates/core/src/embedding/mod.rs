//! Intrusive embedding-space metrics: per-pair Fréchet distance and
//! time-aligned embedding MSE.

mod emb1;

pub use emb1::{decode, encode, read_embeddings, write_embeddings};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an EMB1 file")]
    BadMagic,
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("{frames}×{dims} float32 payload does not fit in memory")]
    DimensionOverflow { frames: usize, dims: usize },
    #[error("EMB1 header is truncated")]
    TruncatedHeader,
    #[error("payload holds {actual} bytes, header promises {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} unexpected bytes after the payload")]
    TrailingBytes(usize),
    #[error("encoder id is not valid UTF-8 or exceeds 65535 bytes")]
    InvalidEncoderId,
    #[error("embedding sequence must have at least one frame and one dimension")]
    EmptySequence,
    #[error("embedding contains non-finite values")]
    NonFiniteInput,
    #[error("at least 2 frames are needed, got {0}")]
    TooFewFrames(usize),
    #[error("encoders differ: {0:?} vs {1:?}")]
    EncoderMismatch(String, String),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not square: {0}×{1}")]
    NotSquare(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Time-resolved encoder output, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    frames: DMatrix<f64>,
    encoder_id: String,
    frame_rate: f32,
}

impl EmbeddingSequence {
    pub fn new(frames: DMatrix<f64>, encoder_id: impl Into<String>, frame_rate: f32) -> Result<Self> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(EmbeddingError::EmptySequence);
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteInput);
        }
        Ok(Self { frames, encoder_id: encoder_id.into(), frame_rate })
    }

    /// Builds a sequence from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>], encoder_id: impl Into<String>, frame_rate: f32) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dims) {
            return Err(EmbeddingError::DimensionMismatch(dims, bad.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), dims, &flat), encoder_id, frame_rate)
    }

    pub fn frames(&self) -> &DMatrix<f64> {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dims(&self) -> usize {
        self.frames.ncols()
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { frames: &self.frames * c, ..self.clone() }
    }

    /// Rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let frames = DMatrix::from_fn(order.len(), self.dims(), |t, d| self.frames[(order[t], d)]);
        Self { frames, ..self.clone() }
    }
}

/// Diagonal loading added to each fitted covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Adds `value · I`.
    Absolute(f64),
    /// Adds `factor · trace(Σ) / D · I`.
    TraceRelative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::TraceRelative(1e-6)
    }
}

/// Mean and covariance of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub frame_count: usize,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, frame_count: usize) -> Result<Self> {
        if !covariance.is_square() {
            return Err(EmbeddingError::NotSquare(covariance.nrows(), covariance.ncols()));
        }
        if covariance.nrows() != mean.len() {
            return Err(EmbeddingError::DimensionMismatch(mean.len(), covariance.nrows()));
        }
        Ok(Self { mean, covariance, frame_count })
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Mean and unbiased covariance (divisor `T − 1`) plus ridge.
///
/// Frames are accumulated in lexicographic order of their values, so the
/// statistics are bit-for-bit independent of frame order.
pub fn fit_gaussian(seq: &EmbeddingSequence, ridge: Ridge) -> Result<GaussianStats> {
    let t = seq.frame_count();
    if t < 2 {
        return Err(EmbeddingError::TooFewFrames(t));
    }
    let d = seq.dims();
    let rows: Vec<Vec<f64>> = seq.frames.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| lexicographic(&rows[a], &rows[b]));

    let mut mean = DVector::<f64>::zeros(d);
    for &i in &order {
        for (m, v) in mean.iter_mut().zip(&rows[i]) {
            *m += v;
        }
    }
    mean /= t as f64;

    let centered = DMatrix::from_fn(t, d, |r, c| rows[order[r]][c] - mean[c]);
    let mut cov = symmetrize(&(centered.transpose() * &centered)) / (t as f64 - 1.0);
    let load = match ridge {
        Ridge::Absolute(v) => v,
        Ridge::TraceRelative(f) => f * cov.trace() / d as f64,
    };
    for i in 0..d {
        cov[(i, i)] += load;
    }
    Ok(GaussianStats { mean, covariance: cov, frame_count: t })
}

/// Symmetric square root of the positive semi-definite part of `matrix`:
/// negative eigenvalues are clamped to zero.
pub fn psd_sqrt(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !matrix.is_square() {
        return Err(EmbeddingError::NotSquare(matrix.nrows(), matrix.ncols()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFiniteInput);
    }
    let eig = SymmetricEigen::new(symmetrize(matrix));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * roots[c]);
    Ok(symmetrize(&(scaled * v.transpose())))
}

/// Fréchet distance between two Gaussians,
/// `‖μ − μ̂‖² + tr(Σ) + tr(Σ̂) − 2·tr(√(S Σ̂ S))` with `S = √Σ`, clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(EmbeddingError::DimensionMismatch(a.mean.len(), b.mean.len()));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let s = psd_sqrt(&a.covariance)?;
    let cross = psd_sqrt(&(&s * &b.covariance * &s))?;
    let trace_term = a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0))
}

fn check_compatible(a: &EmbeddingSequence, b: &EmbeddingSequence) -> Result<()> {
    if a.encoder_id != b.encoder_id {
        return Err(EmbeddingError::EncoderMismatch(a.encoder_id.clone(), b.encoder_id.clone()));
    }
    if a.dims() != b.dims() {
        return Err(EmbeddingError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Fréchet distance between Gaussians fitted to the reference and estimate
/// embeddings of a single pair.
pub fn fad_song2song(reference: &EmbeddingSequence, estimate: &EmbeddingSequence, ridge: Ridge) -> Result<f64> {
    check_compatible(reference, estimate)?;
    frechet_distance(&fit_gaussian(reference, ridge)?, &fit_gaussian(estimate, ridge)?)
}

/// Mean squared difference of time-aligned frames. Both sequences are truncated
/// to the shorter one; a difference of more than one frame is logged.
pub fn embedding_mse(reference: &EmbeddingSequence, estimate: &EmbeddingSequence) -> Result<f64> {
    check_compatible(reference, estimate)?;
    let (tr, te) = (reference.frame_count(), estimate.frame_count());
    if tr.abs_diff(te) > 1 {
        log::warn!("embedding lengths differ by {} frames ({tr} vs {te}); truncating", tr.abs_diff(te));
    }
    let t = tr.min(te);
    let a = reference.frames.rows(0, t);
    let b = estimate.frames.rows(0, t);
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / (t * reference.dims()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(t: usize, d: usize, seed: u64) -> EmbeddingSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingSequence::new(DMatrix::from_fn(t, d, |_, _| rng.random_range(-1.0..1.0)), "stub-mel", 100.0).unwrap()
    }

    #[test]
    fn constant_frames_give_ridge_only() {
        let seq = EmbeddingSequence::from_rows(&vec![vec![1.0, -2.0, 3.0]; 5], "x", 1.0).unwrap();
        let g = fit_gaussian(&seq, Ridge::Absolute(0.25)).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, -2.0, 3.0]);
        assert_eq!(g.covariance, DMatrix::identity(3, 3) * 0.25);
    }

    #[test]
    fn hand_dataset() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 2.0]];
        let g = fit_gaussian(&EmbeddingSequence::from_rows(&rows, "x", 1.0).unwrap(), Ridge::Absolute(0.0)).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 1.0]);
        assert!((g.covariance[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((g.covariance[(1, 1)] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.covariance[(0, 1)], 0.0);
    }

    #[test]
    fn rank_deficient_without_ridge() {
        let seq = random_seq(5, 12, 1);
        let g = fit_gaussian(&seq, Ridge::Absolute(0.0)).unwrap();
        let eig = SymmetricEigen::new(g.covariance.clone());
        let max = eig.eigenvalues.max();
        let rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-10 * max).count();
        assert!(rank <= 4, "rank {rank}");
    }

    #[test]
    fn too_few_frames() {
        assert!(matches!(fit_gaussian(&random_seq(1, 3, 0), Ridge::default()), Err(EmbeddingError::TooFewFrames(1))));
    }

    #[test]
    fn psd_sqrt_cases() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((psd_sqrt(&i).unwrap() - &i).norm() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = psd_sqrt(&d).unwrap();
        assert!((r - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).norm() < 1e-14);
        let bad = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(psd_sqrt(&bad), Err(EmbeddingError::NonFiniteInput)));
    }

    #[test]
    fn psd_sqrt_reconstructs_psd_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        let m = symmetrize(&a);
        // Oracle: PSD part via eigen-clamping, compared against the squared root.
        let eig = SymmetricEigen::new(m.clone());
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        let r = psd_sqrt(&m).unwrap();
        assert!((&r * &r - &psd).norm() / psd.norm() < 1e-8);
    }

    #[test]
    fn scalar_closed_form() {
        let a = GaussianStats::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 1.0), 10).unwrap();
        let b = GaussianStats::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 4.0), 10).unwrap();
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fad_identity_and_mismatches() {
        let a = random_seq(60, 6, 4);
        assert!(fad_song2song(&a, &a, Ridge::default()).unwrap() <= 1e-8);
        let other = EmbeddingSequence::new(a.frames().clone(), "clap-audio", 1.0).unwrap();
        assert!(matches!(fad_song2song(&a, &other, Ridge::default()), Err(EmbeddingError::EncoderMismatch(..))));
        assert!(matches!(embedding_mse(&a, &random_seq(60, 5, 1)), Err(EmbeddingError::DimensionMismatch(6, 5))));
    }

    #[test]
    fn mse_examples() {
        let a = random_seq(20, 4, 5);
        assert_eq!(embedding_mse(&a, &a).unwrap(), 0.0);
        let shifted = EmbeddingSequence::new(a.frames().add_scalar(1.0), "stub-mel", 100.0).unwrap();
        assert!((embedding_mse(&a, &shifted).unwrap() - 1.0).abs() < 1e-12);
        // truncation to the shorter sequence
        let short = EmbeddingSequence::new(a.frames().rows(0, 15).into_owned(), "stub-mel", 100.0).unwrap();
        assert_eq!(embedding_mse(&a, &short).unwrap(), 0.0);
    }

    #[test]
    fn reversed_frames_separate_the_metrics() {
        let a = random_seq(30, 3, 6);
        let order: Vec<usize> = (0..30).rev().collect();
        let b = a.permuted(&order);
        assert!(embedding_mse(&a, &b).unwrap() > 0.0);
        assert_eq!(fad_song2song(&a, &b, Ridge::default()).unwrap(), fad_song2song(&a, &a, Ridge::default()).unwrap());
    }
}
