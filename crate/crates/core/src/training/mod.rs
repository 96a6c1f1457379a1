//! Background-weighted NLL, RMSprop, fixed-length windowing and the epoch
//! loop.

pub mod loss;
pub mod optimizer;
pub mod trainer;
pub mod windows;

pub use loss::{batch_loss, batch_loss_and_grad, weighted_nll, LossConfig, DEFAULT_RHO};
pub use optimizer::{rmsprop_step, OptimizerState};
pub use trainer::{initial_params, train, train_with_callback, TrainConfig, TrainOutcome};
pub use windows::{make_windows, LabeledSequence, TrainWindow, DEFAULT_SEQ_LEN};
