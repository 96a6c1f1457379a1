//! On-disk formats (clip features, manifests, label lists), clip-level
//! target derivation and the synthetic dataset generator.

pub mod features;
pub mod manifest;
pub mod synthetic;

pub use features::{read_features, write_features, FeatureSequence};
pub use manifest::{
    clip_targets, read_labels, read_manifest, resolve_feature_path, split, write_labels, write_manifest,
    Annotation, Subset, VideoRecord,
};
pub use synthetic::{generate_synthetic, SyntheticDataset, SyntheticSpec};

use std::path::Path;

use crate::error::{Error, Result};
use crate::training::LabeledSequence;

/// Reads a record's feature file (relative paths resolve against
/// `manifest_dir`) and checks it against the record.
pub fn load_features(manifest_dir: &Path, record: &VideoRecord) -> Result<FeatureSequence> {
    let path = resolve_feature_path(manifest_dir, record);
    let mut seq = read_features(&path)?;
    if seq.num_clips() != record.num_clips {
        return Err(Error::shape(
            "feature file clip count",
            format!("{} (manifest, video {})", record.num_clips, record.video_id),
            seq.num_clips(),
        ));
    }
    seq.video_id = record.video_id.clone();
    Ok(seq)
}

/// Features plus derived clip targets for every record.
pub fn load_labeled(manifest_dir: &Path, records: &[VideoRecord], num_classes: usize) -> Result<Vec<LabeledSequence>> {
    records
        .iter()
        .map(|r| {
            let features = load_features(manifest_dir, r)?;
            Ok(LabeledSequence {
                video_id: r.video_id.clone(),
                features: features.clips,
                targets: clip_targets(r, num_classes)?,
            })
        })
        .collect()
}
