//! `EMB1` embedding container.
//!
//! Little-endian layout:
//!
//! | field        | type                         |
//! |--------------|------------------------------|
//! | magic        | `b"EMB1"`                    |
//! | version      | u32, always 1                |
//! | frames (T)   | u32                          |
//! | dims (D)     | u32                          |
//! | dtype        | u32, 0 = float32             |
//! | encoder id   | u16 byte length + UTF-8      |
//! | frame rate   | f32                          |
//! | payload      | T·D float32, frame-major     |

use std::path::Path;

use nalgebra::DMatrix;

use super::{EmbeddingError, EmbeddingSequence, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(EmbeddingError::TruncatedHeader)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses an `EMB1` byte stream.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingSequence> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).map_err(|_| EmbeddingError::BadMagic)? != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let frames = cur.u32()? as usize;
    let dims = cur.u32()? as usize;
    let dtype = cur.u32()?;
    if dtype != DTYPE_F32 {
        return Err(EmbeddingError::UnsupportedDtype(dtype));
    }
    let id_len = usize::from(cur.u16()?);
    let encoder_id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|_| EmbeddingError::InvalidEncoderId)?
        .to_owned();
    let frame_rate = cur.f32()?;

    let payload_len = frames
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or(EmbeddingError::DimensionOverflow { frames, dims })?;
    let remaining = bytes.len() - cur.pos;
    if remaining < payload_len {
        return Err(EmbeddingError::TruncatedPayload { expected: payload_len, actual: remaining });
    }
    if remaining > payload_len {
        return Err(EmbeddingError::TrailingBytes(remaining - payload_len));
    }
    let payload = cur.take(payload_len)?;
    let values: Vec<f64> =
        payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
    let matrix = DMatrix::from_row_slice(frames, dims, &values);
    EmbeddingSequence::new(matrix, encoder_id, frame_rate)
}

/// Serializes `seq`; frame values are stored as float32.
pub fn encode(seq: &EmbeddingSequence) -> Result<Vec<u8>> {
    let frames = u32::try_from(seq.frame_count()).map_err(|_| EmbeddingError::DimensionOverflow {
        frames: seq.frame_count(),
        dims: seq.dims(),
    })?;
    let dims = u32::try_from(seq.dims())
        .map_err(|_| EmbeddingError::DimensionOverflow { frames: seq.frame_count(), dims: seq.dims() })?;
    let id_len = u16::try_from(seq.encoder_id().len()).map_err(|_| EmbeddingError::InvalidEncoderId)?;

    let mut out = Vec::with_capacity(26 + seq.encoder_id().len() + 4 * seq.frame_count() * seq.dims());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    out.extend_from_slice(&dims.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(seq.encoder_id().as_bytes());
    out.extend_from_slice(&seq.frame_rate().to_le_bytes());
    let m = seq.frames();
    for t in 0..m.nrows() {
        for d in 0..m.ncols() {
            out.extend_from_slice(&(m[(t, d)] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    decode(&std::fs::read(path)?)
}

pub fn write_embeddings(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(seq)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(t: usize, d: usize) -> EmbeddingSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(t as u64 * 31 + d as u64);
        let m = DMatrix::from_fn(t, d, |_, _| f64::from(rng.random_range(-3.0f32..3.0)));
        EmbeddingSequence::new(m, "mert-l12", 75.0).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb1");
        let seq = random_seq(375, 768);
        write_embeddings(&seq, &path).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.encoder_id(), "mert-l12");
        assert_eq!(back.frame_rate().to_bits(), 75.0f32.to_bits());
        assert_eq!(back.frames().shape(), (375, 768));
        assert!(back.frames().iter().zip(seq.frames().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(encode(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn header_layout() {
        let seq = random_seq(2, 3);
        let bytes = encode(&seq).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 0);
        assert_eq!(u16::from_le_bytes(bytes[20..22].try_into().unwrap()), 8);
        assert_eq!(&bytes[22..30], b"mert-l12");
        assert_eq!(f32::from_le_bytes(bytes[30..34].try_into().unwrap()), 75.0);
        assert_eq!(bytes.len(), 34 + 2 * 3 * 4);
        // frame-major: second payload float is frame 0, dim 1
        let v = f32::from_le_bytes(bytes[38..42].try_into().unwrap());
        assert_eq!(f64::from(v), seq.frames()[(0, 1)]);
    }

    #[test]
    fn malformed_inputs() {
        let mut bytes = encode(&random_seq(4, 4)).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(EmbeddingError::TruncatedPayload { .. })));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(EmbeddingError::TrailingBytes(1))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(EmbeddingError::BadMagic)));
        assert!(matches!(decode(b"EM"), Err(EmbeddingError::BadMagic)));

        let mut huge = encode(&random_seq(1, 1)).unwrap();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = decode(&huge).unwrap_err();
        assert!(
            matches!(err, EmbeddingError::DimensionOverflow { .. } | EmbeddingError::TruncatedPayload { .. }),
            "{err:?}"
        );

        let mut v2 = encode(&random_seq(1, 1)).unwrap();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(EmbeddingError::UnsupportedVersion(2))));
    }
}
