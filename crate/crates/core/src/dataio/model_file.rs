//! Model files: `MILM` magic, then u32 LE version, d, L, H, C, pooling code,
//! then every parameter as f64 LE in [`ModelParams::buffers`] order.

use std::fs;
use std::path::Path;

use super::milb::{check_magic, read_u32};
use super::DataError;
use crate::milnet::{ModelDims, ModelParams, Pooling};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: [u8; 4] = *b"MILM";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn encode_model<T: Scalar>(params: &ModelParams<T>, pooling: Pooling) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.num_values());
    out.extend_from_slice(&MODEL_MAGIC);
    for v in [
        MODEL_VERSION,
        dims.input as u32,
        dims.embed as u32,
        dims.attn as u32,
        dims.classes as u32,
        pooling.code(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for buf in params.buffers() {
        for &v in buf {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<(ModelParams<T>, Pooling), DataError> {
    check_magic(bytes, MODEL_MAGIC)?;
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != MODEL_VERSION {
        return Err(DataError::VersionMismatch {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let dims = ModelDims {
        input: read_u32(bytes, 8) as usize,
        embed: read_u32(bytes, 12) as usize,
        attn: read_u32(bytes, 16) as usize,
        classes: read_u32(bytes, 20) as usize,
    };
    dims.validate()
        .map_err(|e| DataError::config("model header", e.to_string()))?;
    let pooling = Pooling::from_code(read_u32(bytes, 24))
        .ok_or_else(|| DataError::config("model header", "unknown pooling code"))?;
    let mut params = ModelParams::<T>::zeros(dims);
    let expected = HEADER_LEN + 8 * params.num_values();
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
    let mut chunks = bytes[HEADER_LEN..].chunks_exact(8);
    for buf in params.buffers_mut() {
        for v in buf.iter_mut() {
            let raw = f64::from_le_bytes(
                chunks
                    .next()
                    .expect("length checked")
                    .try_into()
                    .expect("8 bytes"),
            );
            if !raw.is_finite() {
                return Err(DataError::NonFinite("model parameters".into()));
            }
            *v = T::lit(raw);
        }
    }
    Ok((params, pooling))
}

pub fn write_model<T: Scalar>(
    path: &Path,
    params: &ModelParams<T>,
    pooling: Pooling,
) -> Result<(), DataError> {
    fs::write(path, encode_model(params, pooling)).map_err(|e| DataError::io(path, e))
}

pub fn read_model<T: Scalar>(path: &Path) -> Result<(ModelParams<T>, Pooling), DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_model(&bytes)
}
