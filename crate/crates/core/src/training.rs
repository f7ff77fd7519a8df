//! Mini-batch SGD loops and evaluation shared by pretraining, calibration and clients.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dualcopy::DualCopyModel;
use crate::error::{Error, Result};
use crate::nn::{self, ModelArch, ModelParams};
use crate::tensor::Tensor;

/// Step size, weight decay and batch size of plain SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub wd: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_lr() -> f64 {
    1e-2
}
fn default_wd() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    64
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            wd: default_wd(),
            batch_size: default_batch(),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be finite and >= 0", self.lr)));
        }
        if !(self.wd >= 0.0 && self.wd.is_finite()) {
            return Err(Error::Config(format!("wd {} must be finite and >= 0", self.wd)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Shuffled mini-batches covering `0..n` once; the last batch may be short.
pub fn epoch_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Runs `epochs` passes of shuffled mini-batches, calling `step` per batch.
/// Returns the mean batch loss of each epoch.
pub(crate) fn sgd_epochs<R, F>(n: usize, batch_size: usize, epochs: usize, rng: &mut R, mut step: F) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> Result<f64>,
{
    let mut curve = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let batches = epoch_batches(n, batch_size, rng);
        let mut total = 0.0;
        for b in &batches {
            total += step(b)?;
        }
        curve.push(total / batches.len().max(1) as f64);
    }
    Ok(curve)
}

/// Centralized SGD on the layers enabled in `trainable`.
pub fn train_epochs<R: Rng + ?Sized>(
    arch: &ModelArch,
    params: &ModelParams,
    data: &Dataset,
    trainable: &[bool],
    cfg: &SgdConfig,
    epochs: usize,
    rng: &mut R,
) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    let mut current = params.clone();
    let curve = sgd_epochs(data.len(), cfg.batch_size, epochs, rng, |batch| {
        let (x, y) = data.batch(batch);
        let (loss, grads) = nn::backward(arch, &current, &x, &y, trainable)?;
        current = nn::sgd_step(arch, &current, &grads, cfg.lr, cfg.wd, trainable)?;
        Ok(loss)
    })?;
    Ok((current, curve))
}

/// Mean loss and accuracy over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 256;

fn evaluate_with<F>(data: &Dataset, mut logits_of: F) -> Result<Evaluation>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk);
        let logits = logits_of(&x)?;
        loss_sum += nn::loss_ce(&logits, &y)? * chunk.len() as f64;
        correct += nn::argmax_rows(&logits)
            .iter()
            .zip(&y)
            .filter(|(p, t)| p == t)
            .count();
    }
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Evaluates a plain ReLU network.
pub fn evaluate(arch: &ModelArch, params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    evaluate_with(data, |x| Ok(nn::forward(arch, params, x)?.logits))
}

/// Evaluates a dual-copy network: masks from SK per input, gated QK forward.
pub fn evaluate_dual(model: &DualCopyModel, data: &Dataset) -> Result<Evaluation> {
    evaluate_with(data, |x| model.predict(x))
}
