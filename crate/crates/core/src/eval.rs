//! Classification mAP / Hit@3, temporal IoU, detection mAP and the
//! smoothing/threshold grid search.
//!
//! Average precision is the non-interpolated mean of the precision values at
//! the ranks of the true positives, divided by the number of positives
//! (ground-truth instances for detection). Classes without any positive are
//! left out of the mean. Score ties are broken by video id, then segment
//! start, then input order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::postprocess::{classify_video, localize, ClipProbSequence, PostprocessConfig, Segment};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union of two time intervals `(start, end)`.
pub fn temporal_iou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for &(start, end) in &[a, b] {
        if !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::DegenerateInterval { start, end });
        }
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    Ok(inter / union)
}

fn segment_iou(a: &Segment, b: &Segment) -> Result<f64> {
    temporal_iou((a.start_s, a.end_s), (b.start_s, b.end_s))
}

/// Non-interpolated AP of a ranked hit list.
fn average_precision(hits: impl IntoIterator<Item = bool>, positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, hit) in hits.into_iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    sum / positives as f64
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scored classes for one video plus its ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub video_id: String,
    /// `(class, score)` sorted by descending score, ties by class index.
    pub ranked: Vec<(usize, f64)>,
    pub ground_truth: usize,
}

impl ClassificationResult {
    pub fn new(video_id: impl Into<String>, scores: Vec<(usize, f64)>, ground_truth: usize) -> Result<Self> {
        let mut ranked = scores;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let video_id = video_id.into();
        let mut classes: Vec<usize> = ranked.iter().map(|&(c, _)| c).collect();
        classes.sort_unstable();
        if let Some(dup) = classes.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!(
                "video {video_id}: class {} scored more than once",
                dup[0]
            )));
        }
        Ok(ClassificationResult {
            video_id,
            ranked,
            ground_truth,
        })
    }

    pub fn score_of(&self, class: usize) -> Option<f64> {
        self.ranked.iter().find(|(c, _)| *c == class).map(|&(_, s)| s)
    }
}

/// Fraction of videos whose ground truth is among the `k` top-scored classes.
pub fn hit_at_k(results: &[ClassificationResult], k: usize) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits = results
        .iter()
        .filter(|r| r.ranked.iter().take(k).any(|&(c, _)| c == r.ground_truth))
        .count();
    hits as f64 / results.len() as f64
}

pub fn hit_at_3(results: &[ClassificationResult]) -> f64 {
    hit_at_k(results, 3)
}

/// Per-class AP of ranking all videos by that class's score. Videos that do
/// not score a class rank below every video that does.
pub fn classification_ap_per_class(results: &[ClassificationResult]) -> BTreeMap<usize, f64> {
    let mut classes: Vec<usize> = results.iter().map(|r| r.ground_truth).collect();
    classes.sort_unstable();
    classes.dedup();

    classes
        .into_iter()
        .map(|class| {
            let mut order: Vec<(&str, f64, bool)> = results
                .iter()
                .map(|r| {
                    let score = r.score_of(class).unwrap_or(f64::NEG_INFINITY);
                    (r.video_id.as_str(), score, r.ground_truth == class)
                })
                .collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let positives = order.iter().filter(|o| o.2).count();
            (class, average_precision(order.iter().map(|o| o.2), positives))
        })
        .collect()
}

pub fn classification_map(results: &[ClassificationResult]) -> f64 {
    mean(classification_ap_per_class(results).into_values())
}

/// Predicted and ground-truth segments of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub video_id: String,
    pub predictions: Vec<Segment>,
    pub ground_truth: Vec<Segment>,
}

/// Score-ranked true/false-positive flags of one class's pooled predictions.
fn match_class(results: &[DetectionResult], class: usize, iou_threshold: f64) -> Result<Vec<bool>> {
    let mut preds: Vec<(usize, &Segment)> = results
        .iter()
        .enumerate()
        .flat_map(|(v, r)| r.predictions.iter().filter(|p| p.label == class).map(move |p| (v, p)))
        .collect();
    preds.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then_with(|| results[a.0].video_id.cmp(&results[b.0].video_id))
            .then_with(|| a.1.start_s.total_cmp(&b.1.start_s))
    });

    let mut matched: Vec<Vec<bool>> = results.iter().map(|r| vec![false; r.ground_truth.len()]).collect();
    let mut hits = Vec::with_capacity(preds.len());
    for (v, pred) in preds {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in results[v].ground_truth.iter().enumerate() {
            if gt.label != class || matched[v][g] {
                continue;
            }
            let iou = segment_iou(pred, gt)?;
            if best.is_none_or(|(_, b)| iou.partial_cmp(&b) == Some(Ordering::Greater)) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) if iou > iou_threshold => {
                matched[v][g] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    Ok(hits)
}

/// Per-class detection AP for every class with at least one ground-truth
/// segment.
pub fn detection_ap_per_class(results: &[DetectionResult], iou_threshold: f64) -> Result<BTreeMap<usize, f64>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!("IoU threshold {iou_threshold} outside (0, 1]")));
    }
    let mut gt_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in results {
        for gt in &r.ground_truth {
            *gt_counts.entry(gt.label).or_default() += 1;
        }
    }
    gt_counts
        .into_iter()
        .map(|(class, positives)| {
            let hits = match_class(results, class, iou_threshold)?;
            Ok((class, average_precision(hits, positives)))
        })
        .collect()
}

pub fn detection_map(results: &[DetectionResult], iou_threshold: f64) -> Result<f64> {
    Ok(mean(detection_ap_per_class(results, iou_threshold)?.into_values()))
}

/// Clip probabilities and annotations of one video, for the grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVideo {
    pub video_id: String,
    pub probs: ClipProbSequence,
    pub ground_truth: Vec<Segment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub k: usize,
    pub gamma: f64,
    pub map: f64,
}

/// Detection mAP for every `(k, gamma)` pair, one row per gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub k_values: Vec<usize>,
    pub gamma_values: Vec<f64>,
    /// Gamma-major: `cells[g * k_values.len() + k]`.
    pub cells: Vec<GridCell>,
}

impl GridTable {
    pub fn get(&self, gamma_index: usize, k_index: usize) -> &GridCell {
        &self.cells[gamma_index * self.k_values.len() + k_index]
    }

    /// Highest-scoring cell; the first one wins ties.
    pub fn best(&self) -> GridCell {
        self.cells
            .iter()
            .copied()
            .reduce(|best, c| if c.map > best.map { c } else { best })
            .expect("grid is non-empty")
    }

    /// Aligned text table, gammas down and k across.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>8}", "gamma");
        for k in &self.k_values {
            let _ = write!(out, " {:>9}", format!("k={k}"));
        }
        out.push('\n');
        for (g, gamma) in self.gamma_values.iter().enumerate() {
            let _ = write!(out, "{gamma:>8.3}");
            for ki in 0..self.k_values.len() {
                let _ = write!(out, " {:>9.5}", self.get(g, ki).map);
            }
            out.push('\n');
        }
        let best = self.best();
        let _ = writeln!(out, "best: k={} gamma={} mAP={:.5}", best.k, best.gamma, best.map);
        out
    }
}

pub fn grid_search(
    videos: &[GridVideo],
    k_values: &[usize],
    gamma_values: &[f64],
    iou_threshold: f64,
) -> Result<GridTable> {
    if k_values.is_empty() || gamma_values.is_empty() {
        return Err(Error::InvalidConfig("grid search needs at least one k and one gamma".into()));
    }
    let labels: Vec<usize> = videos.iter().map(|v| classify_video(&v.probs).label).collect();
    let mut cells = Vec::with_capacity(k_values.len() * gamma_values.len());
    for &gamma in gamma_values {
        for &k in k_values {
            let config = PostprocessConfig { k, gamma };
            let results = videos
                .iter()
                .zip(&labels)
                .map(|(v, &label)| {
                    Ok(DetectionResult {
                        video_id: v.video_id.clone(),
                        predictions: localize(&v.probs, label, &config)?,
                        ground_truth: v.ground_truth.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(GridCell {
                k,
                gamma,
                map: detection_map(&results, iou_threshold)?,
            });
        }
    }
    Ok(GridTable {
        k_values: k_values.to_vec(),
        gamma_values: gamma_values.to_vec(),
        cells,
    })
}
