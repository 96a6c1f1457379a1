use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{window_loss_and_grad, LossConfig, DEFAULT_RHO};
use super::optimizer::{rmsprop_step, OptimizerState, DEFAULT_DECAY, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE};
use super::windows::{make_windows, LabeledSequence, TrainWindow, DEFAULT_SEQ_LEN};
use crate::error::{Error, Result};
use crate::nn::{accumulate, init_params, model_backward, model_forward, Mode, ModelConfig, ModelParams};

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_LAYERS: usize = 1;
pub const DEFAULT_CELLS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub rho: f64,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    /// Worker threads for per-window forward/backward within a batch.
    pub threads: usize,
}

impl TrainConfig {
    /// Reference recipe (1 x 512 LSTM, dropout 0.5, rho 0.3, RMSprop at
    /// 1e-5, 100 epochs of 256 windows of 20 clips) for `num_classes`
    /// activity classes and `input_dim`-dimensional clip features.
    pub fn new(num_classes: usize, input_dim: usize) -> Self {
        TrainConfig {
            model: ModelConfig {
                num_layers: DEFAULT_LAYERS,
                cells: DEFAULT_CELLS,
                num_classes,
                input_dim,
                dropout_p: crate::nn::DEFAULT_DROPOUT,
            },
            rho: DEFAULT_RHO,
            learning_rate: DEFAULT_LEARNING_RATE,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seq_len: DEFAULT_SEQ_LEN,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean weighted NLL over all unmasked training clips, per epoch.
    pub epoch_losses: Vec<f64>,
}

/// The parameters [`train`] starts from for `config`.
pub fn initial_params(config: &TrainConfig) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_params(&config.model, rng.random())
}

pub fn train(dataset: &[LabeledSequence], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_callback(dataset, config, |_, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with_callback(
    dataset: &[LabeledSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let loss_config = LossConfig::new(config.rho)?;
    for video in dataset {
        if video.features.ncols() != config.model.input_dim {
            return Err(Error::shape(
                "training features",
                config.model.input_dim,
                format!("{} (video {})", video.features.ncols(), video.video_id),
            ));
        }
        if let Some(&bad) = video.targets.iter().find(|&&t| t > config.model.num_classes) {
            return Err(Error::TargetOutOfRange {
                index: bad,
                max: config.model.num_classes,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(&config.model, rng.random())?;
    let mut optimizer = OptimizerState::new(&params, config.learning_rate, config.decay, config.epsilon)?;
    let windows = make_windows(dataset, config.seq_len, rng.random())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_count = 0usize;
        for (step, batch_idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainWindow> = batch_idx.iter().map(|&i| &windows[i]).collect();
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let count = batch.iter().map(|w| w.unmasked()).sum::<usize>();
            let normalizer = count as f64;

            let results: Vec<Result<(f64, ModelParams)>> = pool.install(|| {
                batch
                    .par_iter()
                    .zip(&seeds)
                    .map(|(w, &seed)| {
                        let (_, trace) = model_forward(&params, w.features.view(), Mode::Train, seed)?;
                        let (sum, grad) = window_loss_and_grad(w, trace.log_probs.view(), &loss_config, normalizer)?;
                        Ok((sum, model_backward(&params, &trace, grad.view())?))
                    })
                    .collect()
            });

            let mut batch_sum = 0.0;
            let mut grads = params.zeros_like();
            for r in results {
                let (sum, g) = r.map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                batch_sum += sum;
                accumulate(&mut grads, &g);
            }
            let loss = batch_sum / normalizer;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            rmsprop_step(&mut params, &grads, &mut optimizer).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence { epoch, step, loss },
                other => other,
            })?;
            epoch_sum += batch_sum;
            epoch_count += count;
        }
        let mean = epoch_sum / epoch_count as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }

    Ok(TrainOutcome { params, epoch_losses })
}
