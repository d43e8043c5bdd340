//! Per-utterance feature matrices and the `SEAF` feature file format.
//!
//! Layout (all integers little-endian):
//!
//! | field          | type                     |
//! |----------------|--------------------------|
//! | magic          | `b"SEAF"`                |
//! | version        | u32 = 1                  |
//! | frames N       | u32                      |
//! | dim d          | u32                      |
//! | frame period   | u32, microseconds        |
//! | utt_id length  | u16, then UTF-8 bytes    |
//! | payload        | N·d f32, row-major       |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"SEAF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub values: Matrix<f32>,
    pub frame_period_s: f64,
    pub utt_id: String,
}

impl FrameMatrix {
    pub fn new(values: Matrix<f32>, frame_period_s: f64, utt_id: impl Into<String>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix must be non-empty, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::DimensionMismatch("non-finite feature value".into()));
        }
        Ok(Self {
            values,
            frame_period_s,
            utt_id: utt_id.into(),
        })
    }

    pub fn num_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Per-utterance mean and variance normalization of every column.
///
/// Columns whose deviation is below 1e-8 are only mean-shifted.
pub fn normalize_features(feats: &FrameMatrix) -> FrameMatrix {
    let n = feats.num_frames() as f64;
    let means: Vec<f64> = feats.values.col_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0f64; feats.dim()];
    for row in feats.values.row_iter() {
        for ((v, &x), m) in var.iter_mut().zip(row).zip(&means) {
            let d = x as f64 - m;
            *v += d * d;
        }
    }
    let scales: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd < 1e-8 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    let mut values = feats.values.clone();
    for i in 0..values.rows() {
        for ((x, m), s) in values.row_mut(i).iter_mut().zip(&means).zip(&scales) {
            *x = ((*x as f64 - m) / s) as f32;
        }
    }
    FrameMatrix {
        values,
        frame_period_s: feats.frame_period_s,
        utt_id: feats.utt_id.clone(),
    }
}

pub fn encode_features(feats: &FrameMatrix) -> Vec<u8> {
    let id = feats.utt_id.as_bytes();
    let mut out = Vec::with_capacity(22 + id.len() + feats.values.as_slice().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(feats.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(feats.dim() as u32).to_le_bytes());
    let period_us = (feats.frame_period_s * 1e6).round() as u32;
    out.extend_from_slice(&period_us.to_le_bytes());
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    for v in feats.values.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "truncated feature header",
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<FrameMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4).map_err(|_| Error::BadMagic {
        expected: "SEAF".into(),
        found: String::from_utf8_lossy(bytes).into_owned(),
    })?;
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            expected: "SEAF".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = cur.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch {
            expected: FEATURE_VERSION,
            found: version,
        });
    }
    let n = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let period_us = cur.u32()?;
    let id_len = cur.u16()? as usize;
    let utt_id = String::from_utf8(cur.take(id_len)?.to_vec())
        .map_err(|e| Error::UnsupportedFormat(format!("utt_id is not UTF-8: {e}")))?;
    let payload = &bytes[cur.pos..];
    if payload.len() != n * d * 4 {
        return Err(Error::DimensionMismatch(format!(
            "header declares {n}x{d} = {} values, payload holds {} bytes",
            n * d,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FrameMatrix::new(Matrix::new(n, d, data)?, period_us as f64 * 1e-6, utt_id)
}

pub fn write_features(feats: &FrameMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_features(feats))?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FrameMatrix> {
    decode_features(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: &[&[f64]]) -> FrameMatrix {
        FrameMatrix::new(Matrix::from_rows(rows), 0.01, "u1").unwrap()
    }

    #[test]
    fn normalizes_simple_column() {
        let out = normalize_features(&fm(&[&[1.0], &[3.0]]));
        assert_eq!(out.values.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_only_shifted() {
        let out = normalize_features(&fm(&[&[5.0], &[5.0], &[5.0]]));
        assert_eq!(out.values.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_matrix_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let out = normalize_features(&fm(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>()));
        for c in 0..4 {
            let col: Vec<f64> = (0..10).map(|r| out.values[(r, c)] as f64).collect();
            let mean = col.iter().sum::<f64>() / 10.0;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 10.0).sqrt();
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((sd - 1.0).abs() < 1e-6, "sd {sd}");
        }
    }

    #[test]
    fn rejects_bad_magic_and_sizes() {
        let f = fm(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let mut bytes = encode_features(&f);
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_features(&bytes), Err(Error::BadMagic { .. })));

        let mut bytes = encode_features(&f);
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            decode_features(&bytes),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(decode_features(&bytes[..10]), Err(Error::Io(_))));
    }

    #[test]
    fn header_layout() {
        let f = fm(&[&[1.0, 2.0]]);
        let b = encode_features(&f);
        assert_eq!(&b[..4], b"SEAF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 10_000);
        assert_eq!(u16::from_le_bytes(b[20..22].try_into().unwrap()), 2);
        assert_eq!(&b[22..24], b"u1");
        assert_eq!(b.len(), 24 + 8);
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(
            n in 1usize..20,
            d in 1usize..8,
            seed in any::<u64>(),
            id in "[a-z0-9_]{0,12}",
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..n * d).map(|_| rng.gen::<f32>() * 200.0 - 100.0).collect();
            let f = FrameMatrix::new(Matrix::new(n, d, data).unwrap(), 0.01, id).unwrap();
            let back = decode_features(&encode_features(&f)).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn normalization_is_idempotent(n in 1usize..30, d in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..n * d).map(|_| rng.gen::<f32>() * 10.0).collect();
            let f = FrameMatrix::new(Matrix::new(n, d, data).unwrap(), 0.01, "x").unwrap();
            let once = normalize_features(&f);
            let twice = normalize_features(&once);
            for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
            }
        }
    }
}
