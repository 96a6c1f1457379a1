//! Turns per-clip class probabilities into a video label and scored
//! temporal segments.
//!
//! Video label: mean of the clip distributions, argmax over the activity
//! classes. Segments: mean-filter the clip distributions over `±k` clips,
//! take the activity probability `1 - p(background)` per clip, keep clips
//! strictly above `gamma`, merge runs of kept clips.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_SMOOTHING_K: usize = 5;
pub const DEFAULT_GAMMA: f64 = 0.2;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Per-clip distributions over K+1 classes (column 0 is background).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipProbSequence {
    pub probs: Array2<f64>,
    /// Seconds covered by one clip (16 frames / fps).
    pub clip_duration_s: f64,
}

impl ClipProbSequence {
    pub fn new(probs: Array2<f64>, clip_duration_s: f64) -> Result<Self> {
        if probs.nrows() == 0 {
            return Err(Error::EmptySequence("clip probability sequence has no clips"));
        }
        if probs.ncols() < 2 {
            return Err(Error::shape("clip probabilities", "at least 2 columns", probs.ncols()));
        }
        if !(clip_duration_s > 0.0 && clip_duration_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("clip duration {clip_duration_s} must be positive")));
        }
        for (i, row) in probs.rows().into_iter().enumerate() {
            let sum = row.sum();
            if !(sum - 1.0).abs().le(&ROW_SUM_TOLERANCE) || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidConfig(format!(
                    "clip {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(ClipProbSequence { probs, clip_duration_s })
    }

    pub fn from_fps(probs: Array2<f64>, fps: f64) -> Result<Self> {
        Self::new(probs, crate::CLIP_FRAMES as f64 / fps)
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    /// K, the number of activity classes.
    pub fn num_classes(&self) -> usize {
        self.probs.ncols() - 1
    }
}

/// A scored temporal interval of one activity class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Activity class in `1..=K`.
    pub label: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    /// Half-width of the mean filter, in clips.
    pub k: usize,
    /// Activity-probability threshold (strict).
    pub gamma: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            k: DEFAULT_SMOOTHING_K,
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// Mean filter over the window `[i-k, i+k]`, truncated at the sequence ends
/// and normalized by the number of rows actually averaged.
pub fn smooth(seq: &ClipProbSequence, k: usize) -> ClipProbSequence {
    let t_len = seq.len();
    let mut out = Array2::zeros(seq.probs.dim());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(t_len - 1);
        for j in lo..=hi {
            row += &seq.probs.row(j);
        }
        row /= (hi - lo + 1) as f64;
    }
    ClipProbSequence {
        probs: out,
        clip_duration_s: seq.clip_duration_s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClassification {
    /// Predicted activity class in `1..=K`.
    pub label: usize,
    /// Averaged activity probabilities renormalized to sum to 1;
    /// `class_scores[j]` belongs to class `j + 1`.
    pub class_scores: Vec<f64>,
}

impl VideoClassification {
    /// `(class, score)` pairs sorted by descending score, ties by class.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self
            .class_scores
            .iter()
            .enumerate()
            .map(|(j, &s)| (j + 1, s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

/// Averages the clip distributions and picks the most likely activity class
/// (background excluded, ties to the lowest index).
pub fn classify_video(seq: &ClipProbSequence) -> VideoClassification {
    let mean: Array1<f64> = seq.probs.mean_axis(Axis(0)).expect("sequence is non-empty");
    let activity = mean.slice(ndarray::s![1..]);
    let total: f64 = activity.sum();
    let k = activity.len();
    let class_scores: Vec<f64> = if total > 0.0 {
        activity.iter().map(|&p| p / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    };

    let mut label = 1;
    for (j, &s) in class_scores.iter().enumerate() {
        if s > class_scores[label - 1] {
            label = j + 1;
        }
    }
    VideoClassification { label, class_scores }
}

/// `1 - p(background)` per clip.
pub fn activity_probability(seq: &ClipProbSequence) -> Vec<f64> {
    seq.probs
        .column(0)
        .iter()
        .map(|&bg| (1.0 - bg).clamp(0.0, 1.0))
        .collect()
}

/// Temporal segments of `video_label`: runs of clips whose smoothed
/// activity probability exceeds `gamma`. Each segment is scored by the mean
/// smoothed activity probability of its clips.
pub fn localize(seq: &ClipProbSequence, video_label: usize, config: &PostprocessConfig) -> Result<Vec<Segment>> {
    if video_label == 0 || video_label > seq.num_classes() {
        return Err(Error::TargetOutOfRange {
            index: video_label,
            max: seq.num_classes(),
        });
    }
    let activity = activity_probability(&smooth(seq, config.k));
    Ok(runs_above(&activity, config.gamma)
        .into_iter()
        .map(|(first, last)| {
            let run = &activity[first..=last];
            Segment {
                label: video_label,
                start_s: first as f64 * seq.clip_duration_s,
                end_s: (last + 1) as f64 * seq.clip_duration_s,
                score: run.iter().sum::<f64>() / run.len() as f64,
            }
        })
        .collect())
}

/// Inclusive index ranges of maximal runs with `values[i] > threshold`.
fn runs_above(values: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, values.len() - 1));
    }
    runs
}

/// Classification plus localization for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub classification: VideoClassification,
    pub detections: Vec<Segment>,
}

pub fn postprocess_video(seq: &ClipProbSequence, config: &PostprocessConfig) -> VideoPrediction {
    let classification = classify_video(seq);
    let detections = localize(seq, classification.label, config).expect("label comes from classify_video");
    VideoPrediction {
        classification,
        detections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq(rows: Array2<f64>) -> ClipProbSequence {
        ClipProbSequence::new(rows, 0.5).unwrap()
    }

    /// Rows with the given activity probability split evenly over 2 classes.
    fn from_activity(act: &[f64]) -> ClipProbSequence {
        let rows = Array2::from_shape_fn((act.len(), 3), |(i, j)| if j == 0 { 1.0 - act[i] } else { act[i] / 2.0 });
        seq(rows)
    }

    #[test]
    fn k_zero_is_identity() {
        let s = seq(array![[0.2, 0.3, 0.5], [0.7, 0.1, 0.2], [0.1, 0.1, 0.8]]);
        assert_eq!(smooth(&s, 0), s);
    }

    #[test]
    fn constant_sequence_unchanged() {
        let s = seq(Array2::from_shape_fn((7, 3), |(_, j)| [0.1, 0.6, 0.3][j]));
        for k in [1, 2, 10] {
            let out = smooth(&s, k);
            for (a, b) in out.probs.iter().zip(&s.probs) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn window_average_by_hand() {
        let col = [0.0, 1.0, 0.0, 1.0, 0.0];
        let s = seq(Array2::from_shape_fn((5, 2), |(i, j)| if j == 1 { col[i] } else { 1.0 - col[i] }));
        let out = smooth(&s, 1);
        assert!((out.probs[[2, 1]] - 2.0 / 3.0).abs() < 1e-12);
        // boundary: mean of rows 0 and 1
        assert!((out.probs[[0, 1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classify_by_hand() {
        let s = seq(array![[0.0, 0.6, 0.4], [0.0, 0.2, 0.8]]);
        let c = classify_video(&s);
        assert_eq!(c.label, 2);
        assert!((c.class_scores[0] - 0.4).abs() < 1e-12);
        assert!((c.class_scores[1] - 0.6).abs() < 1e-12);
        assert_eq!(c.ranked()[0].0, 2);
    }

    #[test]
    fn classify_singleton_and_ties() {
        let one = seq(array![[0.5, 0.1, 0.3, 0.1]]);
        assert_eq!(classify_video(&one).label, 2);
        let tie = seq(array![[0.2, 0.3, 0.2, 0.3]]);
        assert_eq!(classify_video(&tie).label, 1);
    }

    #[test]
    fn classify_ignores_background() {
        let s = seq(array![[0.9, 0.04, 0.06]]);
        assert_eq!(classify_video(&s).label, 2);
    }

    #[test]
    fn activity_probability_cases() {
        let s = seq(array![[1.0, 0.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]]);
        let a = activity_probability(&s);
        assert_eq!(a[0], 0.0);
        assert!((a[1] - 0.75).abs() < 1e-15);
        for (act, row) in a.iter().zip(s.probs.rows()) {
            assert!((act + row[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn localize_full_span_and_empty() {
        let cfg = PostprocessConfig { k: 0, gamma: 0.2 };
        let all = from_activity(&[0.9; 6]);
        let segs = localize(&all, 1, &cfg).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start_s, segs[0].end_s), (0.0, 3.0));
        assert!(localize(&from_activity(&[0.1; 6]), 1, &cfg).unwrap().is_empty());
    }

    #[test]
    fn localize_run_length_merge() {
        let cfg = PostprocessConfig { k: 0, gamma: 0.2 };
        let s = from_activity(&[0.9, 0.5, 0.1, 0.0, 0.3]);
        let segs = localize(&s, 2, &cfg).unwrap();
        let spans: Vec<_> = segs.iter().map(|g| (g.start_s, g.end_s, g.label)).collect();
        assert_eq!(spans, vec![(0.0, 1.0, 2), (2.0, 2.5, 2)]);
        assert!((segs[0].score - 0.7).abs() < 1e-12);
        assert!((segs[1].score - 0.3).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = PostprocessConfig { k: 0, gamma: 0.5 };
        assert!(localize(&from_activity(&[0.5, 0.5]), 1, &cfg).unwrap().is_empty());
    }

    #[test]
    fn localize_rejects_background_label() {
        let s = from_activity(&[0.9]);
        assert!(localize(&s, 0, &PostprocessConfig::default()).is_err());
        assert!(localize(&s, 3, &PostprocessConfig::default()).is_err());
    }

    #[test]
    fn sequence_validation() {
        assert!(ClipProbSequence::new(Array2::zeros((0, 3)), 1.0).is_err());
        assert!(ClipProbSequence::new(array![[0.5, 0.6]], 1.0).is_err());
        assert!(ClipProbSequence::new(array![[0.5, 0.5]], 0.0).is_err());
        let s = ClipProbSequence::from_fps(array![[0.5, 0.5]], 32.0).unwrap();
        assert_eq!(s.clip_duration_s, 0.5);
    }
}
