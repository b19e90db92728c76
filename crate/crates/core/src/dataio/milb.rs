//! `MILB` feature files: magic, version, n, d (all u32 LE after the magic),
//! then n·d little-endian f32 values, row-major.

use std::fs;
use std::path::Path;

use super::DataError;
use crate::milnet::{FeatureMatrix, Matrix};
use crate::scalar::Scalar;

pub const MILB_MAGIC: [u8; 4] = *b"MILB";
pub const MILB_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_features<T: Scalar>(feats: &FeatureMatrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * feats.as_slice().len());
    out.extend_from_slice(&MILB_MAGIC);
    out.extend_from_slice(&MILB_VERSION.to_le_bytes());
    out.extend_from_slice(&(feats.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(feats.cols() as u32).to_le_bytes());
    for &v in feats.as_slice() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub(crate) fn check_magic(bytes: &[u8], magic: [u8; 4]) -> Result<(), DataError> {
    if bytes.len() < 4 || bytes[..4] != magic {
        return Err(DataError::BadMagic {
            expected: magic,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    Ok(())
}

/// Decodes a MILB buffer. `expected_dim`, when given, must equal the
/// header's d.
pub fn decode_features<T: Scalar>(
    bytes: &[u8],
    expected_dim: Option<usize>,
) -> Result<FeatureMatrix<T>, DataError> {
    check_magic(bytes, MILB_MAGIC)?;
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != MILB_VERSION {
        return Err(DataError::VersionMismatch {
            expected: MILB_VERSION,
            found: version,
        });
    }
    let n = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    if let Some(exp) = expected_dim {
        if exp != d {
            return Err(DataError::DimensionConflict {
                expected: exp,
                found: d,
            });
        }
    }
    let expected = HEADER_LEN + 4 * n * d;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            found: bytes.len() - expected,
        });
    }
    let values: Vec<T> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| {
            T::lit(f64::from(f32::from_le_bytes(
                c.try_into().expect("4-byte chunk"),
            )))
        })
        .collect();
    Matrix::new(n, d, values).map_err(|e| match e {
        crate::Error::NonFinite(m) => DataError::NonFinite(m),
        other => DataError::InvalidRecord {
            id: "<features>".into(),
            reason: other.to_string(),
        },
    })
}

pub fn write_features<T: Scalar>(path: &Path, feats: &FeatureMatrix<T>) -> Result<(), DataError> {
    fs::write(path, encode_features(feats)).map_err(|e| DataError::io(path, e))
}

pub fn read_features<T: Scalar>(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<FeatureMatrix<T>, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_features(&bytes, expected_dim)
}
