//! Clip feature files.
//!
//! ```text
//! "C3DF"
//! u32 LE  version (1)
//! u32 LE  T (clips)
//! u32 LE  D (feature dimension)
//! f32 LE  T·D values, row-major (clip by clip)
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"C3DF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    /// `T × D`
    pub clips: Array2<f32>,
}

impl FeatureSequence {
    pub fn num_clips(&self) -> usize {
        self.clips.nrows()
    }

    pub fn dim(&self) -> usize {
        self.clips.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (t, d) = self.clips.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [FEATURE_VERSION, t as u32, d as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.clips.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(video_id: impl Into<String>, bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_owned(),
                expected: "C3DF",
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_owned(),
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let version = word(1);
        if version != FEATURE_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_owned(),
                version,
            });
        }
        let (t, d) = (word(2) as usize, word(3) as usize);
        let expected = HEADER_LEN + 4 * t * d;
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
        let values: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let clips = Array2::from_shape_vec((t, d), values).expect("length checked above");
        Ok(FeatureSequence {
            video_id: video_id.into(),
            clips,
        })
    }
}

/// Reads a feature file; the video id is taken from the file stem.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    FeatureSequence::from_bytes(id, &bytes, path)
}

pub fn write_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, seq.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSequence {
        FeatureSequence {
            video_id: "vid".into(),
            clips: Array2::from_shape_fn((3, 2), |(i, j)| i as f32 - 0.5 * j as f32 + f32::EPSILON),
        }
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vid.feat");
        write_features(&sample(), &path).unwrap();
        assert_eq!(read_features(&path).unwrap(), sample());
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..16], b"C3DF\x01\0\0\0\x03\0\0\0\x02\0\0\0");
        assert_eq!(bytes.len(), 16 + 24);
    }

    #[test]
    fn short_body_is_truncation() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(16 + 5 * 4);
        let err = FeatureSequence::from_bytes("v", &bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Truncated { expected: 40, found: 36, .. }), "{err}");
    }

    #[test]
    fn long_body_is_dimension_mismatch() {
        let mut bytes = sample().to_bytes();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let err = FeatureSequence::from_bytes("v", &bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.feat");
        fs::write(&empty, b"").unwrap();
        assert!(matches!(read_features(&empty), Err(Error::BadMagic { .. })));

        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            FeatureSequence::from_bytes("v", &bytes, Path::new("x")),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
        assert!(matches!(
            FeatureSequence::from_bytes("v", b"C3DF\x01\0", Path::new("x")),
            Err(Error::Truncated { .. })
        ));
    }
}
