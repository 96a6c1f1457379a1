mod common;

use actloc::nn::{init_params, model_backward, model_forward, Mode, ModelConfig};
use actloc::training::{batch_loss_and_grad, LossConfig, TrainWindow};
use common::{analytic_grad, max_rel_error, numeric_grad, random_problem, GradProblem};
use ndarray::{s, Array2};

const FD_STEP: f64 = 1e-4;
const MAX_REL_ERR: f64 = 1e-4;

#[test]
fn tiny_model_matches_finite_differences() {
    // D=3, c=4, K=2, T=5, single window
    let mut params = init_params(
        &ModelConfig {
            num_layers: 1,
            cells: 4,
            num_classes: 2,
            input_dim: 3,
            dropout_p: 0.5,
        },
        21,
    )
    .unwrap();
    params.lstm_layers[0].biases.input.fill(0.2);
    let window = TrainWindow {
        video_id: "v".into(),
        features: Array2::from_shape_fn((5, 3), |(t, j)| ((t * 3 + j) as f32 * 0.37).sin()),
        targets: vec![0, 1, 1, 2, 0],
        mask: vec![true; 5],
    };
    let problem = GradProblem {
        params,
        windows: vec![window],
        seeds: vec![77],
        loss: LossConfig::default(),
    };
    let err = max_rel_error(&analytic_grad(&problem), &numeric_grad(&problem, FD_STEP));
    assert!(err < MAX_REL_ERR, "max relative error {err:e}");
}

#[test]
fn randomized_small_models_match_finite_differences() {
    for seed in 0..10 {
        let problem = random_problem(1000 + seed);
        let err = max_rel_error(&analytic_grad(&problem), &numeric_grad(&problem, FD_STEP));
        assert!(err < MAX_REL_ERR, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn backprop_through_time_assigns_credit_across_steps() {
    // Loss on both steps of a 2-step sequence. A per-step truncated oracle
    // (each step run alone from the zero state) sees no recurrent gradient at
    // all; BPTT must, and must agree with finite differences.
    let mut params = init_params(
        &ModelConfig {
            num_layers: 1,
            cells: 3,
            num_classes: 2,
            input_dim: 2,
            dropout_p: 0.0,
        },
        5,
    )
    .unwrap();
    for w in params.lstm_layers[0].recurrent_weights.as_array_mut() {
        w.mapv_inplace(|v| v * 3.0 + 0.2);
    }
    let features = ndarray::array![[0.5f32, -1.0], [1.2, 0.3]];
    let targets = vec![1, 2];
    let window = TrainWindow {
        video_id: "v".into(),
        features: features.clone(),
        targets: targets.clone(),
        mask: vec![true, true],
    };
    let full = GradProblem {
        params: params.clone(),
        windows: vec![window],
        seeds: vec![0],
        loss: LossConfig::default(),
    };
    let bptt = analytic_grad(&full);
    assert!(max_rel_error(&bptt, &numeric_grad(&full, FD_STEP)) < MAX_REL_ERR);

    let mut truncated = params.zeros_like();
    for (t, &target) in targets.iter().enumerate() {
        let single = TrainWindow {
            video_id: "v".into(),
            features: features.slice(s![t..t + 1, ..]).to_owned(),
            targets: vec![target],
            mask: vec![true],
        };
        let (_, trace) = model_forward(&params, single.features.view(), Mode::Train, 0).unwrap();
        // both steps share the 2-clip normalizer of the full problem
        let (_, g) = batch_loss_and_grad(&[single], std::slice::from_ref(&trace.log_probs), &LossConfig::default()).unwrap();
        let g = g[0].mapv(|v| v / 2.0);
        let grads = model_backward(&params, &trace, g.view()).unwrap();
        actloc::nn::accumulate(&mut truncated, &grads);
    }

    let recurrent_norm = |p: &actloc::nn::ModelParams| {
        p.lstm_layers[0]
            .recurrent_weights
            .as_array()
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    assert_eq!(recurrent_norm(&truncated), 0.0);
    assert!(recurrent_norm(&bptt) > 1e-3);
    assert!(max_rel_error(&bptt, &truncated) > 1e-2);
}

#[test]
fn loss_gradient_wrt_logits_matches_finite_differences() {
    let problem = random_problem(7);
    let logits: Vec<Array2<f64>> = problem
        .windows
        .iter()
        .zip(&problem.seeds)
        .map(|(w, &s)| model_forward(&problem.params, w.features.view(), Mode::Train, s).unwrap().1.logits)
        .collect();
    let loss_at = |logits: &[Array2<f64>]| {
        let lp: Vec<_> = logits.iter().map(actloc::nn::log_softmax_rows).collect();
        actloc::training::batch_loss(&problem.windows, &lp, &problem.loss).unwrap()
    };
    let lp: Vec<_> = logits.iter().map(actloc::nn::log_softmax_rows).collect();
    let (_, analytic) = batch_loss_and_grad(&problem.windows, &lp, &problem.loss).unwrap();
    for (w, grad) in analytic.iter().enumerate() {
        for ((t, c), &g) in grad.indexed_iter() {
            let mut plus = logits.clone();
            plus[w][[t, c]] += FD_STEP;
            let mut minus = logits.clone();
            minus[w][[t, c]] -= FD_STEP;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(common::REL_ERR_FLOOR);
            assert!(rel < MAX_REL_ERR, "window {w} clip {t} class {c}: {g} vs {numeric}");
        }
    }
}

#[test]
fn padding_changes_neither_loss_nor_gradients() {
    let problem = random_problem(3);
    let mut padded = GradProblem {
        params: problem.params.clone(),
        windows: problem.windows.clone(),
        seeds: problem.seeds.clone(),
        loss: problem.loss,
    };
    for w in &mut padded.windows {
        let (t, d) = w.features.dim();
        let mut f = Array2::zeros((t + 4, d));
        f.slice_mut(s![..t, ..]).assign(&w.features);
        w.features = f;
        w.targets.extend([0, 1, 0, 1]);
        w.mask.extend([false; 4]);
    }
    assert_eq!(common::loss_of(&problem, &problem.params), common::loss_of(&padded, &padded.params));
    assert_eq!(analytic_grad(&problem), analytic_grad(&padded));
}
