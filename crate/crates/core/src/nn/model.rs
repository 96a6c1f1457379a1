//! The full sequence classifier:
//! `input(D) - dropout(p) - N x lstm(c) - dropout(p) - softmax(K+1)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{lstm_cell_step, lstm_step_backward, LstmLayerParams, LstmState, StepCache};
use crate::error::{Error, Result};

/// Feature dimension of C3D fc6 activations.
pub const DEFAULT_INPUT_DIM: usize = 4096;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSoftmaxParams {
    /// `(K+1) × cells`
    pub weights: Array2<f64>,
    /// `K+1`
    pub bias: Array1<f64>,
}

/// All trainable parameters of the model. The same structure doubles as the
/// gradient container and as the RMSprop accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub lstm_layers: Vec<LstmLayerParams>,
    pub output: DenseSoftmaxParams,
    pub input_dim: usize,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub cells: usize,
    /// Number of activity classes K, excluding background.
    pub num_classes: usize,
    pub input_dim: usize,
    pub dropout_p: f64,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let lstm_layers = (0..config.num_layers)
            .map(|l| {
                let input_dim = if l == 0 { config.input_dim } else { config.cells };
                LstmLayerParams::zeros(input_dim, config.cells)
            })
            .collect();
        ModelParams {
            lstm_layers,
            output: DenseSoftmaxParams {
                weights: Array2::zeros((config.num_classes + 1, config.cells)),
                bias: Array1::zeros(config.num_classes + 1),
            },
            input_dim: config.input_dim,
            dropout_p: config.dropout_p,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.config())
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            num_layers: self.lstm_layers.len(),
            cells: self.cells(),
            num_classes: self.num_classes(),
            input_dim: self.input_dim,
            dropout_p: self.dropout_p,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.lstm_layers.len()
    }

    pub fn cells(&self) -> usize {
        self.output.weights.ncols()
    }

    /// K, the number of activity classes (the softmax has K+1 outputs).
    pub fn num_classes(&self) -> usize {
        self.output.bias.len().saturating_sub(1)
    }

    /// Views of every parameter tensor in checkpoint order: per layer the
    /// input weights, recurrent weights and biases (each i, f, o, g), then
    /// the dense weights and the dense bias. All tensors are standard-layout.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(12 * self.lstm_layers.len() + 2);
        for layer in &self.lstm_layers {
            out.extend(layer.input_weights.as_array().map(slice2));
            out.extend(layer.recurrent_weights.as_array().map(slice2));
            out.extend(layer.biases.as_array().map(slice1));
        }
        out.push(slice2(&self.output.weights));
        out.push(slice1(&self.output.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(12 * self.lstm_layers.len() + 2);
        for layer in &mut self.lstm_layers {
            out.extend(layer.input_weights.as_array_mut().map(slice2_mut));
            out.extend(layer.recurrent_weights.as_array_mut().map(slice2_mut));
            out.extend(layer.biases.as_array_mut().map(slice1_mut));
        }
        out.push(slice2_mut(&mut self.output.weights));
        out.push(slice1_mut(&mut self.output.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Structural checks: at least one layer, layer chaining, uniform cell
    /// count, output layer shape.
    pub fn validate(&self) -> Result<()> {
        if self.lstm_layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one LSTM layer".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability {} outside [0, 1]",
                self.dropout_p
            )));
        }
        let cells = self.cells();
        let mut expected_in = self.input_dim;
        for layer in &self.lstm_layers {
            layer.validate()?;
            if layer.input_dim() != expected_in {
                return Err(Error::shape("LSTM layer input", expected_in, layer.input_dim()));
            }
            if layer.cells() != cells {
                return Err(Error::shape("LSTM layer cells", cells, layer.cells()));
            }
            expected_in = cells;
        }
        if self.output.weights.nrows() != self.output.bias.len() || self.output.bias.len() < 2 {
            return Err(Error::shape(
                "dense softmax layer",
                format!("(K+1)x{cells} weights with K >= 1"),
                format!(
                    "{}x{} weights, bias {}",
                    self.output.weights.nrows(),
                    self.output.weights.ncols(),
                    self.output.bias.len()
                ),
            ));
        }
        Ok(())
    }
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameter vectors are contiguous")
}
fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter matrices are standard layout")
}
fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameter vectors are contiguous")
}
fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameter matrices are standard layout")
}

/// Uniform `±1/sqrt(fan_in)` weights (fan_in = number of columns of each
/// matrix), forget-gate bias 1, other biases 0.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    if config.num_layers == 0 || config.cells == 0 || config.num_classes == 0 || config.input_dim == 0 {
        return Err(Error::InvalidConfig(format!(
            "layers, cells, classes and input dim must be positive (got N={}, c={}, K={}, D={})",
            config.num_layers, config.cells, config.num_classes, config.input_dim
        )));
    }
    if !(0.0..=1.0).contains(&config.dropout_p) {
        return Err(Error::InvalidConfig(format!(
            "dropout probability {} outside [0, 1]",
            config.dropout_p
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(config);
    let mut fill = |m: &mut Array2<f64>| {
        let bound = 1.0 / (m.ncols() as f64).sqrt();
        m.mapv_inplace(|_| rng.random_range(-bound..=bound));
    };
    for layer in &mut params.lstm_layers {
        for w in layer.input_weights.as_array_mut() {
            fill(w);
        }
        for w in layer.recurrent_weights.as_array_mut() {
            fill(w);
        }
        layer.biases.forget.fill(1.0);
    }
    fill(&mut params.output.weights);
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1/(1-p)`.
pub fn dropout_mask<R: Rng>(len: usize, p: f64, rng: &mut R) -> Array1<f64> {
    let scale = 1.0 / (1.0 - p);
    Array1::from_shape_fn(len, |_| if rng.random::<f64>() < p { 0.0 } else { scale })
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `steps[t][l]`: cache of layer `l` at timestep `t`.
    pub steps: Vec<Vec<StepCache>>,
    /// Mask on the input features (all ones in eval mode).
    pub input_mask: Array1<f64>,
    /// Mask on the last LSTM layer output (all ones in eval mode).
    pub output_mask: Array1<f64>,
    /// Masked top-layer hidden state fed to the dense layer, `T × cells`.
    pub dense_input: Array2<f64>,
    pub logits: Array2<f64>,
    pub log_probs: Array2<f64>,
    pub probs: Array2<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - max - log_sum);
    }
    out
}

/// Runs the model over one feature sequence (`T × input_dim`). LSTM state
/// starts at zero. In train mode one dropout mask per dropout site is drawn
/// from `seed` and shared by all timesteps.
pub fn model_forward(
    params: &ModelParams,
    features: ArrayView2<'_, f32>,
    mode: Mode,
    seed: u64,
) -> Result<(Array2<f64>, ForwardTrace)> {
    params.validate()?;
    let (t_len, dim) = features.dim();
    if t_len == 0 {
        return Err(Error::EmptySequence("model input has no clips"));
    }
    if dim != params.input_dim {
        return Err(Error::shape("model input features", params.input_dim, dim));
    }

    let cells = params.cells();
    let (input_mask, output_mask) = match mode {
        Mode::Eval => (Array1::ones(dim), Array1::ones(cells)),
        Mode::Train => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = dropout_mask(dim, params.dropout_p, &mut rng);
            let output = dropout_mask(cells, params.dropout_p, &mut rng);
            (input, output)
        }
    };

    let mut states: Vec<LstmState> = (0..params.num_layers()).map(|_| LstmState::zeros(cells)).collect();
    let mut steps = Vec::with_capacity(t_len);
    let mut dense_input = Array2::zeros((t_len, cells));
    for (t, row) in features.outer_iter().enumerate() {
        let mut x: Array1<f64> = row.mapv(f64::from);
        if mode == Mode::Train {
            x *= &input_mask;
        }
        let mut caches = Vec::with_capacity(params.num_layers());
        for (layer, state) in params.lstm_layers.iter().zip(states.iter_mut()) {
            let (next, cache) = lstm_cell_step(layer, x.view(), state)?;
            x = next.hidden.clone();
            *state = next;
            caches.push(cache);
        }
        if mode == Mode::Train {
            x *= &output_mask;
        }
        dense_input.row_mut(t).assign(&x);
        steps.push(caches);
    }

    let mut logits = dense_input.dot(&params.output.weights.t());
    logits += &params.output.bias;
    let log_probs = log_softmax_rows(&logits);
    let probs = log_probs.mapv(f64::exp);

    let trace = ForwardTrace {
        steps,
        input_mask,
        output_mask,
        dense_input,
        logits,
        log_probs,
        probs: probs.clone(),
    };
    Ok((probs, trace))
}

/// Exact gradients by backpropagation through time.
///
/// `grad_logits` holds, per timestep, the loss gradient w.r.t. the softmax
/// logits (pre-softmax activations), shape `T × (K+1)`.
pub fn model_backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_logits: ArrayView2<'_, f64>,
) -> Result<ModelParams> {
    let t_len = trace.len();
    let classes = params.output.bias.len();
    if grad_logits.nrows() != t_len {
        return Err(Error::shape("gradient timesteps", t_len, grad_logits.nrows()));
    }
    if grad_logits.ncols() != classes {
        return Err(Error::shape("gradient classes", classes, grad_logits.ncols()));
    }
    if trace.steps.iter().any(|s| s.len() != params.num_layers()) {
        return Err(Error::shape(
            "trace layers",
            params.num_layers(),
            trace.steps.first().map_or(0, Vec::len),
        ));
    }

    let mut grads = params.zeros_like();
    grads.output.weights = grad_logits.t().dot(&trace.dense_input);
    grads.output.bias = grad_logits.sum_axis(Axis(0));
    let d_dense_input = grad_logits.dot(&params.output.weights);

    let cells = params.cells();
    let n_layers = params.num_layers();
    let mut d_hidden_next: Vec<Array1<f64>> = vec![Array1::zeros(cells); n_layers];
    let mut d_cell_next: Vec<Array1<f64>> = vec![Array1::zeros(cells); n_layers];

    for t in (0..t_len).rev() {
        let mut d_from_above = &d_dense_input.row(t) * &trace.output_mask;
        for l in (0..n_layers).rev() {
            let d_hidden = &d_from_above + &d_hidden_next[l];
            let step = lstm_step_backward(
                &params.lstm_layers[l],
                &trace.steps[t][l],
                &d_hidden,
                &d_cell_next[l],
                &mut grads.lstm_layers[l],
            );
            d_hidden_next[l] = step.prev_hidden;
            d_cell_next[l] = step.prev_cell;
            d_from_above = step.input;
        }
    }
    Ok(grads)
}

/// `acc += other`, tensor by tensor. Both must share a structure.
pub fn accumulate(acc: &mut ModelParams, other: &ModelParams) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}
