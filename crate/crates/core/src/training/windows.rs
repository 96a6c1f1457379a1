use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Clips per training sample.
pub const DEFAULT_SEQ_LEN: usize = 20;

/// A whole video: its clip features (`T × D`) and per-clip class targets
/// (0 = background).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub video_id: String,
    pub features: Array2<f32>,
    pub targets: Vec<usize>,
}

/// Fixed-length training sample. Padding positions have zero features,
/// target 0 and `mask = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainWindow {
    pub video_id: String,
    pub features: Array2<f32>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TrainWindow {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn unmasked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Splits every video into non-overlapping windows of `seq_len` clips,
/// zero-pads the last one and shuffles the result with `seed`.
pub fn make_windows(dataset: &[LabeledSequence], seq_len: usize, seed: u64) -> Result<Vec<TrainWindow>> {
    if dataset.is_empty() {
        return Err(Error::EmptySequence("training dataset has no videos"));
    }
    if seq_len == 0 {
        return Err(Error::InvalidConfig("sequence length must be positive".into()));
    }
    let mut windows = Vec::new();
    for video in dataset {
        let (t_len, dim) = video.features.dim();
        if t_len == 0 {
            return Err(Error::EmptySequence("video has no clips"));
        }
        if video.targets.len() != t_len {
            return Err(Error::shape("clip targets", t_len, video.targets.len()));
        }
        for start in (0..t_len).step_by(seq_len) {
            let end = (start + seq_len).min(t_len);
            let real = end - start;
            let mut features = Array2::zeros((seq_len, dim));
            features
                .slice_mut(s![..real, ..])
                .assign(&video.features.slice(s![start..end, ..]));
            let mut targets = vec![0; seq_len];
            targets[..real].copy_from_slice(&video.targets[start..end]);
            let mut mask = vec![false; seq_len];
            mask[..real].fill(true);
            windows.push(TrainWindow {
                video_id: video.video_id.clone(),
                features,
                targets,
                mask,
            });
        }
    }
    windows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(id: &str, clips: usize) -> LabeledSequence {
        LabeledSequence {
            video_id: id.into(),
            features: Array2::from_shape_fn((clips, 3), |(i, j)| (i * 3 + j) as f32 + 1.0),
            targets: (0..clips).map(|i| i % 3).collect(),
        }
    }

    #[test]
    fn exact_division() {
        let w = make_windows(&[video("a", 40)], 20, 0).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| w.mask.iter().all(|&m| m)));
    }

    #[test]
    fn short_tail_is_padded() {
        let mut w = make_windows(&[video("a", 25)], 20, 0).unwrap();
        assert_eq!(w.len(), 2);
        w.sort_by_key(TrainWindow::unmasked);
        let tail = &w[0];
        assert_eq!(tail.unmasked(), 5);
        assert_eq!(tail.mask.iter().filter(|&&m| !m).count(), 15);
        assert!(tail.mask[..5].iter().all(|&m| m));
        assert!(tail.features.slice(s![5.., ..]).iter().all(|&v| v == 0.0));
        assert!(tail.targets[5..].iter().all(|&t| t == 0));
        // first real clip of the tail is clip 20 of the video
        assert_eq!(tail.features[[0, 0]], 61.0);
        assert_eq!(tail.targets[0], 20 % 3);
    }

    #[test]
    fn shuffle_is_seeded() {
        let data: Vec<_> = (0..6).map(|i| video(&format!("v{i}"), 30 + i)).collect();
        let ids = |seed| {
            make_windows(&data, 20, seed)
                .unwrap()
                .into_iter()
                .map(|w| (w.unmasked(), w.video_id))
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(7), ids(7));
        assert_ne!(ids(7), ids(8));
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(make_windows(&[], 20, 0).is_err());
        assert!(make_windows(&[video("a", 0)], 20, 0).is_err());
        assert!(make_windows(&[video("a", 5)], 0, 0).is_err());
    }
}
