//! LSTM sequence classifier with hand-written backpropagation through time.

pub mod checkpoint;
pub mod lstm;
pub mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use lstm::{lstm_cell_step, Gates, LstmLayerParams, LstmState, StepCache};
pub use model::{
    accumulate, dropout_mask, init_params, log_softmax_rows, model_backward, model_forward,
    DenseSoftmaxParams, ForwardTrace, Mode, ModelConfig, ModelParams, DEFAULT_DROPOUT,
    DEFAULT_INPUT_DIM,
};
