//! Ready-made transfer benchmark: pretrain on Gaussian blobs, federate on the
//! same classes after a domain shift.

use serde::{Deserialize, Serialize};

use crate::data::{generate, Dataset, Generator, SyntheticSpec};
use crate::error::Result;
use crate::fedproto::{mix64, RoundLog};
use crate::nn::ModelArch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub source_samples: usize,
    pub probe_samples: usize,
    pub target_samples: usize,
    pub val_samples: usize,
    pub noise_sigma: f64,
    pub center_scale: f64,
    /// Norm of the translation applied to every class center in the target domain.
    pub domain_shift: f64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden: vec![32, 32],
            classes: 10,
            source_samples: 3000,
            probe_samples: 600,
            target_samples: 4000,
            val_samples: 1000,
            noise_sigma: 1.6,
            center_scale: 1.0,
            domain_shift: 2.0,
        }
    }
}

/// Architecture and the four datasets of one benchmark instance.
#[derive(Debug, Clone)]
pub struct TransferTask {
    pub arch: ModelArch,
    pub source: Dataset,
    pub probe: Dataset,
    pub target: Dataset,
    pub val: Dataset,
}

impl TransferSpec {
    fn data(&self, generator: Generator, n: usize, task_seed: u64, stream: u64) -> SyntheticSpec {
        SyntheticSpec {
            generator,
            n_samples: n,
            n_classes: self.classes,
            input_shape: vec![self.input_dim],
            noise_sigma: self.noise_sigma,
            seed: mix64(task_seed ^ stream),
            task_seed: Some(task_seed),
            center_scale: self.center_scale,
        }
    }

    /// Source and probe share the source domain; target and validation share the shifted one.
    pub fn build(&self, seed: u64) -> Result<TransferTask> {
        let shifted = Generator::ShiftedBlobs {
            domain_shift: self.domain_shift,
        };
        Ok(TransferTask {
            arch: ModelArch::mlp(self.input_dim, &self.hidden, self.classes)?,
            source: generate(&self.data(Generator::GaussianBlobs, self.source_samples, seed, 1))?,
            probe: generate(&self.data(Generator::GaussianBlobs, self.probe_samples, seed, 2))?,
            target: generate(&self.data(shifted, self.target_samples, seed, 3))?,
            val: generate(&self.data(shifted, self.val_samples, seed, 4))?,
        })
    }
}

/// Mean absolute change of validation accuracy between consecutive evaluated
/// rounds after `after_round`. `None` with fewer than two such rounds.
pub fn oscillation(logs: &[RoundLog], after_round: usize) -> Option<f64> {
    let acc: Vec<f64> = logs
        .iter()
        .filter(|l| l.round > after_round)
        .filter_map(|l| l.val_accuracy)
        .collect();
    if acc.len() < 2 {
        return None;
    }
    Some(acc.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (acc.len() - 1) as f64)
}
