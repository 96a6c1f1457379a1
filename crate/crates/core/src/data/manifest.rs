//! JSON-lines video manifests, label lists and clip-level targets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Testing,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Validation => "validation",
            Subset::Testing => "testing",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "validation" => Ok(Subset::Validation),
            "testing" => Ok(Subset::Testing),
            other => Err(Error::UnknownSubset(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Activity class in `1..=K`.
    pub label: usize,
    /// `[start_s, end_s]`
    pub segment: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub feature_path: String,
    pub fps: f64,
    pub num_clips: usize,
    pub subset: Subset,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl VideoRecord {
    pub fn clip_duration_s(&self) -> f64 {
        crate::CLIP_FRAMES as f64 / self.fps
    }

    pub fn duration_s(&self) -> f64 {
        self.num_clips as f64 * self.clip_duration_s()
    }

    /// The activity class of the video (the label of its first annotation).
    pub fn video_label(&self) -> Option<usize> {
        self.annotations.first().map(|a| a.label)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format!("fps {} must be positive", self.fps));
        }
        if self.num_clips == 0 {
            return Err("num_clips must be positive".into());
        }
        let limit = self.duration_s() + self.clip_duration_s();
        for a in &self.annotations {
            let [start, end] = a.segment;
            if a.label == 0 {
                return Err("annotation label 0 is reserved for background".into());
            }
            if !(start >= 0.0 && end > start && end <= limit) {
                return Err(format!("annotation [{start}, {end}] outside [0, {limit}] or empty"));
            }
        }
        Ok(())
    }
}

/// Reads a JSON-lines manifest. Blank lines are skipped; the first bad line
/// is reported with its 1-based line number.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Manifest {
            path: path.to_owned(),
            line: i + 1,
            message,
        };
        let record: VideoRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        record.validate().map_err(bad)?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(records: &[VideoRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Json {
            path: path.to_owned(),
            source: e,
        })?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Records of one subset, in manifest order.
pub fn split(records: &[VideoRecord], subset: Subset) -> Vec<VideoRecord> {
    records.iter().filter(|r| r.subset == subset).cloned().collect()
}

pub fn resolve_feature_path(manifest_dir: &Path, record: &VideoRecord) -> PathBuf {
    let p = Path::new(&record.feature_path);
    if p.is_absolute() {
        p.to_owned()
    } else {
        manifest_dir.join(p)
    }
}

/// One class name per line; line `i` (1-based) names class `i`.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).filter(|l| !l.trim().is_empty()).collect())
}

pub fn write_labels(names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = names.join("\n");
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-clip targets: clip `i` covers `[i·d, (i+1)·d)` with `d = 16/fps` and
/// takes the label of the annotation overlapping it by more than `d/2`
/// (largest overlap wins, ties to the earlier annotation), else background.
pub fn clip_targets(record: &VideoRecord, num_classes: usize) -> Result<Vec<usize>> {
    if let Some(a) = record.annotations.iter().find(|a| a.label == 0 || a.label > num_classes) {
        return Err(Error::TargetOutOfRange {
            index: a.label,
            max: num_classes,
        });
    }
    let d = record.clip_duration_s();
    Ok((0..record.num_clips)
        .map(|i| {
            let (lo, hi) = (i as f64 * d, (i + 1) as f64 * d);
            let mut best = (0, 0.0);
            for a in &record.annotations {
                let overlap = (hi.min(a.segment[1]) - lo.max(a.segment[0])).max(0.0);
                if overlap > best.1 {
                    best = (a.label, overlap);
                }
            }
            if best.1 > d / 2.0 {
                best.0
            } else {
                0
            }
        })
        .collect())
}
