//! Synthetic untrimmed videos: Gaussian clip features around per-class
//! centroids, with one activity class per video occurring in one or more
//! non-overlapping, clip-aligned segments.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::features::{write_features, FeatureSequence};
use super::manifest::{write_labels, write_manifest, Annotation, Subset, VideoRecord};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LABELS_FILE: &str = "labels.txt";
pub const FEATURES_DIR: &str = "features";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_videos: usize,
    pub validation_videos: usize,
    pub testing_videos: usize,
    /// Inclusive range of clips per video.
    pub clip_count_range: (usize, usize),
    /// Inclusive range of activity segments per video.
    pub segments_per_video_range: (usize, usize),
    /// Inclusive range of segment lengths, in clips.
    pub segment_clips_range: (usize, usize),
    /// Minimum background clips between two segments of one video.
    pub min_gap_clips: usize,
    /// Distance of every centroid from the origin.
    pub class_separation: f64,
    /// Per-dimension standard deviation of clip features.
    pub noise_sigma: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 10,
            feature_dim: 32,
            train_videos: 200,
            validation_videos: 50,
            testing_videos: 0,
            clip_count_range: (20, 60),
            segments_per_video_range: (1, 2),
            segment_clips_range: (8, 30),
            min_gap_clips: 10,
            class_separation: 1.0,
            noise_sigma: 0.25,
            fps: 30.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return invalid(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.feature_dim == 0 {
            return invalid("feature dimension must be positive".into());
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return invalid(format!("class separation {} must be > 0", self.class_separation));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return invalid(format!("fps {} must be > 0", self.fps));
        }
        for (name, (lo, hi)) in [
            ("clip count", self.clip_count_range),
            ("segments per video", self.segments_per_video_range),
            ("segment length", self.segment_clips_range),
        ] {
            if lo == 0 || lo > hi {
                return invalid(format!("{name} range [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
            }
        }
        if self.segment_clips_range.0 > self.clip_count_range.0 {
            return Err(Error::InfeasibleSpec(format!(
                "a {}-clip segment does not fit in a {}-clip video",
                self.segment_clips_range.0, self.clip_count_range.0
            )));
        }
        Ok(())
    }

    pub fn clip_duration_s(&self) -> f64 {
        crate::CLIP_FRAMES as f64 / self.fps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<VideoRecord>,
    pub features: Vec<FeatureSequence>,
    /// Generator bookkeeping: the class of every clip of every video.
    pub clip_labels: Vec<Vec<usize>>,
    /// Row 0 is the background centroid, row `c` the centroid of class `c`.
    pub centroids: Array2<f64>,
    pub class_names: Vec<String>,
}

impl SyntheticDataset {
    /// Writes `manifest.jsonl`, `labels.txt` and `features/<id>.feat` under
    /// `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let features_dir = dir.join(FEATURES_DIR);
        fs::create_dir_all(&features_dir).map_err(|e| Error::io(&features_dir, e))?;
        for (record, seq) in self.records.iter().zip(&self.features) {
            write_features(seq, dir.join(&record.feature_path))?;
        }
        write_labels(&self.class_names, dir.join(LABELS_FILE))?;
        let manifest = dir.join(MANIFEST_FILE);
        write_manifest(&self.records, &manifest)?;
        Ok(manifest)
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_fn(dim, |_| StandardNormal.sample(rng));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Clip-aligned `(first_clip, len)` segments for a video of `clips` clips.
fn pack_segments(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, clips: usize) -> Vec<(usize, usize)> {
    let (min_len, max_len) = spec.segment_clips_range;
    let gap = spec.min_gap_clips;
    let (lo, hi) = spec.segments_per_video_range;
    let mut n = rng.random_range(lo..=hi);
    while n > 1 && n * min_len + (n - 1) * gap > clips {
        n -= 1;
    }
    let room = clips - (n - 1) * gap;
    let cap = max_len.min(room / n).max(min_len);
    let lengths: Vec<usize> = (0..n).map(|_| rng.random_range(min_len..=cap)).collect();
    let slack = room - lengths.iter().sum::<usize>();
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();

    let mut segments = Vec::with_capacity(n);
    let mut cursor = 0;
    let mut prev_cut = 0;
    for (i, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
        cursor += cut - prev_cut + if i > 0 { gap } else { 0 };
        prev_cut = cut;
        segments.push((cursor, len));
        cursor += len;
    }
    segments
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.num_classes;
    let d = spec.feature_dim;

    let mut centroids = Array2::zeros((k + 1, d));
    for mut row in centroids.rows_mut() {
        row.assign(&(random_direction(&mut rng, d) * spec.class_separation));
    }
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let clip_s = spec.clip_duration_s();

    let mut records = Vec::new();
    let mut features = Vec::new();
    let mut clip_labels = Vec::new();
    for (subset, count) in [
        (Subset::Train, spec.train_videos),
        (Subset::Validation, spec.validation_videos),
        (Subset::Testing, spec.testing_videos),
    ] {
        for i in 0..count {
            let video_id = format!("synth_{subset}_{i:05}");
            let class = rng.random_range(1..=k);
            let clips = rng.random_range(spec.clip_count_range.0..=spec.clip_count_range.1);
            let segments = pack_segments(&mut rng, spec, clips);

            let mut labels = vec![0; clips];
            for &(start, len) in &segments {
                labels[start..start + len].fill(class);
            }
            let data = Array2::from_shape_fn((clips, d), |(t, j)| {
                (centroids[[labels[t], j]] + noise.sample(&mut rng)) as f32
            });

            records.push(VideoRecord {
                feature_path: format!("{FEATURES_DIR}/{video_id}.feat"),
                video_id: video_id.clone(),
                fps: spec.fps,
                num_clips: clips,
                subset,
                annotations: segments
                    .iter()
                    .map(|&(start, len)| Annotation {
                        label: class,
                        segment: [start as f64 * clip_s, (start + len) as f64 * clip_s],
                    })
                    .collect(),
            });
            features.push(FeatureSequence { video_id, clips: data });
            clip_labels.push(labels);
        }
    }

    Ok(SyntheticDataset {
        records,
        features,
        clip_labels,
        centroids,
        class_names: (1..=k).map(|c| format!("class_{c:03}")).collect(),
    })
}
