//! Single LSTM layer: parameters, recurrence state and the per-timestep
//! forward/backward kernels.
//!
//! Standard formulation without peepholes:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)      g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};

/// One value per LSTM gate, in the fixed order input, forget, output,
/// candidate. The same order is used in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates<T> {
    pub input: T,
    pub forget: T,
    pub output: T,
    pub candidate: T,
}

impl<T> Gates<T> {
    pub fn from_fn(mut f: impl FnMut() -> T) -> Self {
        let input = f();
        let forget = f();
        let output = f();
        let candidate = f();
        Gates {
            input,
            forget,
            output,
            candidate,
        }
    }

    pub fn as_array(&self) -> [&T; 4] {
        [&self.input, &self.forget, &self.output, &self.candidate]
    }

    pub fn as_array_mut(&mut self) -> [&mut T; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.output,
            &mut self.candidate,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `cells × input_dim` per gate.
    pub input_weights: Gates<Array2<f64>>,
    /// `cells × cells` per gate.
    pub recurrent_weights: Gates<Array2<f64>>,
    pub biases: Gates<Array1<f64>>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, cells: usize) -> Self {
        LstmLayerParams {
            input_weights: Gates::from_fn(|| Array2::zeros((cells, input_dim))),
            recurrent_weights: Gates::from_fn(|| Array2::zeros((cells, cells))),
            biases: Gates::from_fn(|| Array1::zeros(cells)),
        }
    }

    pub fn cells(&self) -> usize {
        self.biases.input.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.input.ncols()
    }

    /// Checks that every gate group has the shapes implied by
    /// `(cells, input_dim)` of the input gate.
    pub fn validate(&self) -> Result<()> {
        let (cells, input_dim) = (self.cells(), self.input_dim());
        for w in self.input_weights.as_array() {
            if w.dim() != (cells, input_dim) {
                return Err(Error::shape(
                    "LSTM input weights",
                    format!("{cells}x{input_dim}"),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
        }
        for w in self.recurrent_weights.as_array() {
            if w.dim() != (cells, cells) {
                return Err(Error::shape(
                    "LSTM recurrent weights",
                    format!("{cells}x{cells}"),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
        }
        for b in self.biases.as_array() {
            if b.len() != cells {
                return Err(Error::shape("LSTM biases", cells, b.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Array1<f64>,
    pub cell: Array1<f64>,
}

impl LstmState {
    pub fn zeros(cells: usize) -> Self {
        LstmState {
            hidden: Array1::zeros(cells),
            cell: Array1::zeros(cells),
        }
    }
}

/// Everything one timestep of one layer needs for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub input: Array1<f64>,
    pub prev: LstmState,
    /// Gate activations (after sigmoid / tanh).
    pub gates: Gates<Array1<f64>>,
    pub cell_tanh: Array1<f64>,
    pub next: LstmState,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Advances one layer by one timestep.
pub fn lstm_cell_step(
    params: &LstmLayerParams,
    x: ArrayView1<'_, f64>,
    state: &LstmState,
) -> Result<(LstmState, StepCache)> {
    let cells = params.cells();
    if x.len() != params.input_dim() {
        return Err(Error::shape("LSTM step input", params.input_dim(), x.len()));
    }
    if state.hidden.len() != cells || state.cell.len() != cells {
        return Err(Error::shape(
            "LSTM step state",
            format!("hidden {cells}, cell {cells}"),
            format!("hidden {}, cell {}", state.hidden.len(), state.cell.len()),
        ));
    }

    let pre = |w: &Array2<f64>, u: &Array2<f64>, b: &Array1<f64>| {
        let mut z = w.dot(&x);
        z += &u.dot(&state.hidden);
        z += b;
        z
    };
    let (w, u, b) = (&params.input_weights, &params.recurrent_weights, &params.biases);
    let gates = Gates {
        input: pre(&w.input, &u.input, &b.input).mapv_into(sigmoid),
        forget: pre(&w.forget, &u.forget, &b.forget).mapv_into(sigmoid),
        output: pre(&w.output, &u.output, &b.output).mapv_into(sigmoid),
        candidate: pre(&w.candidate, &u.candidate, &b.candidate).mapv_into(f64::tanh),
    };

    let mut cell = &gates.forget * &state.cell;
    Zip::from(&mut cell)
        .and(&gates.input)
        .and(&gates.candidate)
        .for_each(|c, &i, &g| *c += i * g);
    let cell_tanh = cell.mapv(f64::tanh);
    let hidden = &gates.output * &cell_tanh;

    let next = LstmState { hidden, cell };
    let cache = StepCache {
        input: x.to_owned(),
        prev: state.clone(),
        gates,
        cell_tanh,
        next: next.clone(),
    };
    Ok((next, cache))
}

/// Gradients flowing out of one timestep of one layer.
pub(crate) struct StepGrads {
    pub input: Array1<f64>,
    pub prev_hidden: Array1<f64>,
    pub prev_cell: Array1<f64>,
}

/// Backpropagates through one cached step. `d_hidden` and `d_cell` are the
/// total loss gradients w.r.t. this step's new hidden and cell state;
/// parameter gradients are accumulated into `grads`.
pub(crate) fn lstm_step_backward(
    params: &LstmLayerParams,
    cache: &StepCache,
    d_hidden: &Array1<f64>,
    d_cell: &Array1<f64>,
    grads: &mut LstmLayerParams,
) -> StepGrads {
    let g = &cache.gates;
    let cells = params.cells();

    let mut dc = d_cell.clone();
    Zip::from(&mut dc)
        .and(d_hidden)
        .and(&g.output)
        .and(&cache.cell_tanh)
        .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

    // Pre-activation gradients.
    let mut dz = Gates::from_fn(|| Array1::<f64>::zeros(cells));
    for j in 0..cells {
        let (i, f, o, cand) = (g.input[j], g.forget[j], g.output[j], g.candidate[j]);
        dz.input[j] = dc[j] * cand * i * (1.0 - i);
        dz.forget[j] = dc[j] * cache.prev.cell[j] * f * (1.0 - f);
        dz.output[j] = d_hidden[j] * cache.cell_tanh[j] * o * (1.0 - o);
        dz.candidate[j] = dc[j] * i * (1.0 - cand * cand);
    }

    let mut d_input = Array1::zeros(params.input_dim());
    let mut d_prev_hidden = Array1::zeros(cells);
    let gate_iter = dz
        .as_array()
        .into_iter()
        .zip(params.input_weights.as_array())
        .zip(params.recurrent_weights.as_array())
        .zip(grads.input_weights.as_array_mut())
        .zip(grads.recurrent_weights.as_array_mut())
        .zip(grads.biases.as_array_mut());
    for (((((dz, w), u), gw), gu), gb) in gate_iter {
        add_outer(gw, dz, &cache.input);
        add_outer(gu, dz, &cache.prev.hidden);
        *gb += dz;
        d_input += &w.t().dot(dz);
        d_prev_hidden += &u.t().dot(dz);
    }

    StepGrads {
        input: d_input,
        prev_hidden: d_prev_hidden,
        prev_cell: dc * &g.forget,
    }
}

/// `m += a ⊗ b`
pub(crate) fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    Zip::from(m.rows_mut())
        .and(a)
        .for_each(|mut row, &ai| row.scaled_add(ai, b));
}
