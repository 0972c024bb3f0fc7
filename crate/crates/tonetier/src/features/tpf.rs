//! Bit-exact feature file format.
//!
//! Layout: magic `TPF1`, then `T` and `F` as little-endian u32, then `T*F`
//! 32-bit little-endian IEEE-754 floats, row-major.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::FeatureError;

pub const MAGIC: &[u8; 4] = b"TPF1";

/// Serialize a T x F matrix into the block format.
pub fn encode(frames: &Array2<f64>) -> Vec<u8> {
    let (t, f) = frames.dim();
    let mut out = Vec::with_capacity(12 + t * f * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    for row in frames.rows() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode a block produced by [`encode`] from a reader.
pub fn decode(reader: &mut impl Read, origin: &str) -> Result<Array2<f64>, FeatureError> {
    let bad = |message: &str| FeatureError::BadFormat {
        path: origin.to_string(),
        message: message.to_string(),
    };
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut dims = [0u8; 8];
    reader
        .read_exact(&mut dims)
        .map_err(|_| bad("truncated dims"))?;
    let t = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
    let mut data = vec![0u8; t * f * 4];
    reader
        .read_exact(&mut data)
        .map_err(|_| bad("truncated data"))?;
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((t, f), values).map_err(|_| bad("shape mismatch"))
}

pub fn write_file(path: &Path, frames: &Array2<f64>) -> Result<(), FeatureError> {
    let bytes = encode(frames);
    let mut file = std::fs::File::create(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<Array2<f64>, FeatureError> {
    let mut file = std::fs::File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&mut file, &path.display().to_string())
}
