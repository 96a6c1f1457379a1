//! Binary checkpoint format.
//!
//! ```text
//! "SAC1"
//! u32 LE  N (LSTM layers)
//! u32 LE  c (cells per layer)
//! u32 LE  K (activity classes)
//! u32 LE  input_dim
//! f32 LE  parameters, in `ModelParams::tensors` order
//! ```
//!
//! Parameters are held in f64 in memory and rounded to f32 on save.

use std::fs;
use std::path::Path;

use super::model::{ModelConfig, ModelParams, DEFAULT_DROPOUT};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SAC1";
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [params.num_layers(), params.cells(), params.num_classes(), params.input_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for tensor in params.tensors() {
        for &v in tensor {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a checkpoint. `dropout_p` is not stored and comes back as the
/// default.
pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected: "SAC1",
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let header: Vec<usize> = bytes[4..HEADER_LEN]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let config = ModelConfig {
        num_layers: header[0],
        cells: header[1],
        num_classes: header[2],
        input_dim: header[3],
        dropout_p: DEFAULT_DROPOUT,
    };
    if header.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "{}: checkpoint header has a zero dimension {header:?}",
            path.display()
        )));
    }
    let mut params = ModelParams::zeros(&config);
    let expected = HEADER_LEN + 4 * params.num_parameters();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::DimensionMismatch {
            path: path.to_owned(),
            expected,
            found: bytes.len(),
        });
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = values.next().expect("length checked above");
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}
