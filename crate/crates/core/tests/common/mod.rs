//! Test-only oracles shared by the integration suites. Nothing here calls
//! the code path it is used to check.
#![allow(dead_code)]

use actloc::nn::{init_params, model_backward, model_forward, Mode, ModelConfig, ModelParams};
use actloc::postprocess::Segment;
use actloc::training::{batch_loss, batch_loss_and_grad, LossConfig, TrainWindow};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradProblem {
    pub params: ModelParams,
    pub windows: Vec<TrainWindow>,
    pub seeds: Vec<u64>,
    pub loss: LossConfig,
}

/// A random tiny model with a 2-window batch (some padding).
pub fn random_problem(seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        num_layers: rng.random_range(1..=2),
        cells: rng.random_range(1..=5),
        num_classes: rng.random_range(1..=3),
        input_dim: rng.random_range(1..=5),
        dropout_p: 0.5,
    };
    let mut params = init_params(&config, rng.random()).unwrap();
    // Move biases away from their structured init so every path is exercised.
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let windows = (0..2)
        .map(|w| {
            let t_len = rng.random_range(2..=6);
            let real = if w == 0 { t_len } else { rng.random_range(1..=t_len) };
            TrainWindow {
                video_id: format!("w{w}"),
                features: Array2::from_shape_fn((t_len, config.input_dim), |(t, _)| {
                    if t < real {
                        rng.random_range(-1.5f32..1.5)
                    } else {
                        0.0
                    }
                }),
                targets: (0..t_len)
                    .map(|t| if t < real { rng.random_range(0..=config.num_classes) } else { 0 })
                    .collect(),
                mask: (0..t_len).map(|t| t < real).collect(),
            }
        })
        .collect();
    GradProblem {
        params,
        windows,
        seeds: vec![rng.random(), rng.random()],
        loss: LossConfig::new(rng.random_range(0.1..=1.0)).unwrap(),
    }
}

pub fn loss_of(p: &GradProblem, params: &ModelParams) -> f64 {
    let log_probs: Vec<Array2<f64>> = p
        .windows
        .iter()
        .zip(&p.seeds)
        .map(|(w, &s)| model_forward(params, w.features.view(), Mode::Train, s).unwrap().1.log_probs)
        .collect();
    batch_loss(&p.windows, &log_probs, &p.loss).unwrap()
}

pub fn analytic_grad(p: &GradProblem) -> ModelParams {
    let traces: Vec<_> = p
        .windows
        .iter()
        .zip(&p.seeds)
        .map(|(w, &s)| model_forward(&p.params, w.features.view(), Mode::Train, s).unwrap().1)
        .collect();
    let log_probs: Vec<Array2<f64>> = traces.iter().map(|t| t.log_probs.clone()).collect();
    let (_, dlogits) = batch_loss_and_grad(&p.windows, &log_probs, &p.loss).unwrap();
    let mut total = p.params.zeros_like();
    for (trace, g) in traces.iter().zip(&dlogits) {
        let grads = model_backward(&p.params, trace, g.view()).unwrap();
        for (a, b) in total.tensors_mut().into_iter().zip(grads.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
    total
}

/// Central differences with step `h` on every parameter.
pub fn numeric_grad(p: &GradProblem, h: f64) -> ModelParams {
    let mut grad = p.params.zeros_like();
    let sizes: Vec<usize> = p.params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let mut plus = p.params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = p.params.clone();
            minus.tensors_mut()[ti][i] -= h;
            grad.tensors_mut()[ti][i] = (loss_of(p, &plus) - loss_of(p, &minus)) / (2.0 * h);
        }
    }
    grad
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`; the floor keeps entries
/// whose true gradient is ~0 from dividing finite-difference truncation
/// noise by ~0.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn max_rel_error(a: &ModelParams, b: &ModelParams) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(&u, &v)| (u, v)).collect::<Vec<_>>())
        .map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

/// Brute-force detection AP: enumerate the ranked list, decide every
/// prediction by scanning all ground truth, trace the full precision/recall
/// curve and integrate precision over recall steps.
pub fn brute_force_detection_map(
    videos: &[(String, Vec<Segment>, Vec<Segment>)],
    iou_threshold: f64,
) -> f64 {
    let iou = |a: &Segment, b: &Segment| {
        let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
        inter / ((a.end_s - a.start_s) + (b.end_s - b.start_s) - inter)
    };
    let mut classes: Vec<usize> = videos.iter().flat_map(|v| v.2.iter().map(|g| g.label)).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    let mut ap_sum = 0.0;
    for &c in &classes {
        let n_gt = videos.iter().flat_map(|v| &v.2).filter(|g| g.label == c).count();
        let mut preds: Vec<(f64, &str, f64, usize, Segment)> = Vec::new();
        for (vi, (id, p, _)) in videos.iter().enumerate() {
            for s in p.iter().filter(|s| s.label == c) {
                preds.push((s.score, id.as_str(), s.start_s, vi, *s));
            }
        }
        // descending score, then video id, then start (stable for the rest)
        preds.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(b.1))
                .then(a.2.partial_cmp(&b.2).unwrap())
        });
        let mut used: Vec<Vec<bool>> = videos.iter().map(|v| vec![false; v.2.len()]).collect();
        let mut curve = vec![(0.0f64, 1.0f64)];
        let mut tp = 0.0;
        for (rank, (_, _, _, vi, s)) in preds.iter().enumerate() {
            let mut best_iou = -1.0;
            let mut best_g = None;
            for (g, gt) in videos[*vi].2.iter().enumerate() {
                if gt.label == c && !used[*vi][g] && iou(s, gt) > best_iou {
                    best_iou = iou(s, gt);
                    best_g = Some(g);
                }
            }
            if let Some(g) = best_g.filter(|_| best_iou > iou_threshold) {
                used[*vi][g] = true;
                tp += 1.0;
            }
            curve.push((tp / n_gt as f64, tp / (rank + 1) as f64));
        }
        ap_sum += curve.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum::<f64>();
    }
    ap_sum / classes.len() as f64
}

/// Clip probabilities for a video whose activity runs over `segments`
/// (half-open clip ranges). Each clip's activity state is flipped with
/// probability `flip`, which fragments unsmoothed detections.
pub fn noisy_probs(
    rng: &mut ChaCha8Rng,
    clips: usize,
    segments: &[(usize, usize)],
    label: usize,
    num_classes: usize,
    flip: f64,
) -> Array2<f64> {
    let mut probs = Array2::zeros((clips, num_classes + 1));
    for (t, mut row) in probs.rows_mut().into_iter().enumerate() {
        let inside = segments.iter().any(|&(s, e)| t >= s && t < e);
        let active = inside != (rng.random::<f64>() < flip);
        let act = if active {
            rng.random_range(0.6..0.95)
        } else {
            rng.random_range(0.0..0.15)
        };
        row[0] = 1.0 - act;
        if num_classes == 1 {
            row[1] = act;
        } else {
            for c in 1..=num_classes {
                row[c] = if c == label { 0.7 * act } else { 0.3 * act / (num_classes - 1) as f64 };
            }
        }
    }
    probs
}
