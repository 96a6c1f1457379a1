//! Activity classification and temporal localization in untrimmed videos
//! from per-clip features.
//!
//! A stacked LSTM labels every 16-frame clip with a distribution over K
//! activity classes plus background. The clip probabilities are averaged
//! into a video-level label and smoothed and thresholded into temporal
//! segments, which are scored with classification mAP / Hit@3 and
//! detection mAP at a temporal-IoU threshold.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod postprocess;
pub mod training;

pub use error::{Error, Result};

/// Frames per clip.
pub const CLIP_FRAMES: usize = 16;
