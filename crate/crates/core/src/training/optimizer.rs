use crate::error::{Error, Result};
use crate::nn::ModelParams;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;
pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSprop hyperparameters and the running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub mean_square: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {learning_rate} must be >= 0")));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidConfig(format!("RMSprop decay {decay} outside (0, 1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("RMSprop epsilon {epsilon} must be > 0")));
        }
        Ok(OptimizerState {
            learning_rate,
            decay,
            epsilon,
            mean_square: params.zeros_like(),
        })
    }

    pub fn with_defaults(params: &ModelParams) -> Self {
        Self::new(params, DEFAULT_LEARNING_RATE, DEFAULT_DECAY, DEFAULT_EPSILON)
            .expect("defaults are valid")
    }
}

/// One RMSprop update, elementwise:
/// `ms ← decay·ms + (1−decay)·g²`, `p ← p − lr·g / (sqrt(ms) + eps)`.
///
/// Gradients are checked before anything is modified, so a rejected step
/// leaves `params` and `state` untouched.
pub fn rmsprop_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) -> Result<()> {
    let param_shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let grad_shapes: Vec<usize> = grads.tensors().iter().map(|t| t.len()).collect();
    if param_shapes != grad_shapes {
        return Err(Error::shape("gradient structure", format!("{param_shapes:?}"), format!("{grad_shapes:?}")));
    }
    for (ti, tensor) in grads.tensors().iter().enumerate() {
        if let Some(i) = tensor.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                location: format!("tensor {ti}, entry {i}"),
            });
        }
    }

    let (lr, decay, eps) = (state.learning_rate, state.decay, state.epsilon);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.mean_square.tensors_mut());
    for ((p, g), ms) in tensors {
        for ((p, &g), ms) in p.iter_mut().zip(g).zip(ms.iter_mut()) {
            *ms = decay * *ms + (1.0 - decay) * g * g;
            *p -= lr * g / (ms.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ModelConfig};

    fn params() -> ModelParams {
        init_params(
            &ModelConfig {
                num_layers: 1,
                cells: 2,
                num_classes: 2,
                input_dim: 3,
                dropout_p: 0.5,
            },
            4,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_identity_and_decays_accumulator() {
        let mut p = params();
        let before = p.clone();
        let mut state = OptimizerState::with_defaults(&p);
        for t in state.mean_square.tensors_mut() {
            t.fill(1.0);
        }
        let zero = p.zeros_like();
        rmsprop_step(&mut p, &zero, &mut state).unwrap();
        assert_eq!(p, before);
        assert!(state.mean_square.tensors().iter().all(|t| t.iter().all(|&v| v == 0.9)));
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = params();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        let mut g = p.zeros_like();
        g.output.bias[0] = 2.0;
        let mut state = OptimizerState::new(&p, 1e-5, 0.9, 1e-8).unwrap();
        rmsprop_step(&mut p, &g, &mut state).unwrap();
        assert!((state.mean_square.output.bias[0] - 0.4).abs() < 1e-15);
        let expected = -1e-5 * 2.0 / (0.4f64.sqrt() + 1e-8);
        assert!((p.output.bias[0] - expected).abs() < 1e-18);
        assert_eq!(p.output.bias[1], 0.0);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let (lr, decay, eps) = (1e-3, 0.9, 1e-8);
        let gs = [0.7, -1.3];
        let (mut p_ref, mut ms_ref) = (0.25f64, 0.0f64);
        for g in gs {
            ms_ref = decay * ms_ref + (1.0 - decay) * g * g;
            p_ref -= lr * g / (ms_ref.sqrt() + eps);
        }

        let mut p = params();
        p.output.bias[1] = 0.25;
        let mut state = OptimizerState::new(&p, lr, decay, eps).unwrap();
        for g in gs {
            let mut grads = p.zeros_like();
            grads.output.bias[1] = g;
            rmsprop_step(&mut p, &grads, &mut state).unwrap();
        }
        assert!((p.output.bias[1] - p_ref).abs() < 1e-12);
        assert!((state.mean_square.output.bias[1] - ms_ref).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut p = params();
        let before = p.clone();
        let mut state = OptimizerState::with_defaults(&p);
        let mut g = p.zeros_like();
        g.output.bias[0] = 1.0;
        g.lstm_layers[0].biases.forget[1] = f64::NAN;
        let err = rmsprop_step(&mut p, &g, &mut state).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p, before);
        assert!(state.mean_square.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }
}
