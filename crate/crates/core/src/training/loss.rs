use ndarray::{Array2, ArrayView1, ArrayView2};

use super::windows::TrainWindow;
use crate::error::{Error, Result};

/// Weight of background clips in the loss.
pub const DEFAULT_RHO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub rho: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { rho: DEFAULT_RHO }
    }
}

impl LossConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho {rho} outside (0, 1]")));
        }
        Ok(LossConfig { rho })
    }

    /// α(x): `rho` for background (class 0), 1 for activity classes.
    pub fn weight(&self, target: usize) -> f64 {
        if target == 0 {
            self.rho
        } else {
            1.0
        }
    }
}

/// `-α(target) · log q(target)` for a one-hot target.
pub fn weighted_nll(log_probs: ArrayView1<'_, f64>, target: usize, config: &LossConfig) -> Result<f64> {
    if target >= log_probs.len() {
        return Err(Error::TargetOutOfRange {
            index: target,
            max: log_probs.len().saturating_sub(1),
        });
    }
    if let Some(i) = log_probs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "log-probability",
            location: format!("class {i}"),
        });
    }
    Ok(-config.weight(target) * log_probs[target])
}

/// Summed weighted NLL over the unmasked clips of one window, and the
/// gradient of `sum / normalizer` w.r.t. the softmax logits.
pub(crate) fn window_loss_and_grad(
    window: &TrainWindow,
    log_probs: ArrayView2<'_, f64>,
    config: &LossConfig,
    normalizer: f64,
) -> Result<(f64, Array2<f64>)> {
    if log_probs.nrows() != window.len() {
        return Err(Error::shape("window log-probabilities", window.len(), log_probs.nrows()));
    }
    let mut grad = Array2::zeros(log_probs.dim());
    let mut sum = 0.0;
    for (t, (&target, &real)) in window.targets.iter().zip(&window.mask).enumerate() {
        if !real {
            continue;
        }
        let row = log_probs.row(t);
        sum += weighted_nll(row, target, config)?;
        let alpha = config.weight(target) / normalizer;
        let mut g = grad.row_mut(t);
        g.zip_mut_with(&row, |g, &lp| *g = alpha * lp.exp());
        g[target] -= alpha;
    }
    Ok((sum, grad))
}

/// Mean weighted NLL over every unmasked clip of the batch.
pub fn batch_loss(windows: &[TrainWindow], log_probs: &[Array2<f64>], config: &LossConfig) -> Result<f64> {
    batch_loss_and_grad(windows, log_probs, config).map(|(loss, _)| loss)
}

/// [`batch_loss`] plus its gradient w.r.t. each window's softmax logits.
pub fn batch_loss_and_grad(
    windows: &[TrainWindow],
    log_probs: &[Array2<f64>],
    config: &LossConfig,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if windows.len() != log_probs.len() {
        return Err(Error::shape("batch size", windows.len(), log_probs.len()));
    }
    let count = windows.iter().map(TrainWindow::unmasked).sum::<usize>();
    if count == 0 {
        return Err(Error::EmptySequence("batch has no unmasked clips"));
    }
    let n = count as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(windows.len());
    for (w, lp) in windows.iter().zip(log_probs) {
        let (sum, g) = window_loss_and_grad(w, lp.view(), config, n)?;
        total += sum;
        grads.push(g);
    }
    Ok((total / n, grads))
}
