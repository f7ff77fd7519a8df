//! Structural / quantitative dual copies of one network.
//!
//! The structural copy (SK) is frozen at construction and only decides which
//! units are open for a given input. The quantitative copy (QK) computes the
//! pre-activations that flow through those gates and is the only copy that
//! trains. With the gates fixed, the network is affine in its input.

use std::sync::Arc;

use crate::calibrate::Schedule;
use crate::error::{Error, Result};
use crate::nn::{self, BinaryMask, GradientSet, ModelArch, ModelParams};
use crate::tensor::Tensor;

/// Activation masks of every gated layer for one batch, in layer order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationMaskSet {
    masks: Vec<BinaryMask>,
}

impl ActivationMaskSet {
    pub fn new(masks: Vec<BinaryMask>) -> Self {
        Self { masks }
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn batch_size(&self) -> usize {
        self.masks.first().map_or(0, |m| m.shape()[0])
    }

    /// Masks of a single sample, keeping a batch dimension of one.
    pub fn sample(&self, i: usize) -> Result<ActivationMaskSet> {
        if i >= self.batch_size() {
            return Err(Error::Input(format!("sample {i} outside mask batch of {}", self.batch_size())));
        }
        let masks = self
            .masks
            .iter()
            .map(|m| {
                let per: usize = m.shape()[1..].iter().product();
                let mut shape = m.shape().to_vec();
                shape[0] = 1;
                BinaryMask::new(shape, m.bits()[i * per..(i + 1) * per].to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(ActivationMaskSet { masks })
    }

    /// Uniform masks (all open or all closed) for a batch of `batch` samples.
    pub fn uniform(arch: &ModelArch, batch: usize, open: bool) -> Self {
        let masks = arch
            .gated_layers()
            .iter()
            .map(|&l| {
                let mut shape = vec![batch];
                shape.extend_from_slice(arch.output_shape(l));
                BinaryMask::filled(&shape, open)
            })
            .collect();
        Self { masks }
    }
}

/// Exact affine map `logits = A x + b` valid for one fixed activation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    /// `[num_classes, input_dim]`.
    pub a: Tensor,
    /// `[num_classes]`.
    pub b: Tensor,
}

impl AffineMap {
    /// Evaluates `A x + b` for one flattened input.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (k, d) = (self.a.shape()[0], self.a.shape()[1]);
        (0..k)
            .map(|r| {
                let row = &self.a.data()[r * d..(r + 1) * d];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b.data()[r]
            })
            .collect()
    }
}

/// A network held as a frozen structural copy and a trainable quantitative copy.
#[derive(Debug, Clone)]
pub struct DualCopyModel {
    arch: ModelArch,
    sk: Arc<ModelParams>,
    qk: ModelParams,
    schedule: Schedule,
}

/// Builds both copies from one pretrained checkpoint.
pub fn make_dual_copy(arch: &ModelArch, w_pt: &ModelParams, schedule: Schedule) -> Result<DualCopyModel> {
    DualCopyModel::new(arch, w_pt, schedule)
}

impl DualCopyModel {
    pub fn new(arch: &ModelArch, w_pt: &ModelParams, schedule: Schedule) -> Result<Self> {
        Self::from_parts(arch.clone(), w_pt.clone(), w_pt.clone(), schedule)
    }

    pub fn from_parts(arch: ModelArch, sk: ModelParams, qk: ModelParams, schedule: Schedule) -> Result<Self> {
        Self::with_shared_sk(arch, Arc::new(sk), qk, schedule)
    }

    /// Reuses an already shared structural copy (clients hold the broadcast one).
    pub fn with_shared_sk(arch: ModelArch, sk: Arc<ModelParams>, qk: ModelParams, schedule: Schedule) -> Result<Self> {
        schedule.check_arch(&arch)?;
        sk.validate(&arch)?;
        qk.validate(&arch)?;
        Ok(Self { arch, sk, qk, schedule })
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    /// The frozen structural parameters; there is no mutable access.
    pub fn sk(&self) -> &ModelParams {
        &self.sk
    }

    pub fn sk_shared(&self) -> Arc<ModelParams> {
        Arc::clone(&self.sk)
    }

    pub fn qk(&self) -> &ModelParams {
        &self.qk
    }

    pub fn into_qk(self) -> ModelParams {
        self.qk
    }

    pub fn set_qk(&mut self, qk: ModelParams) -> Result<()> {
        qk.validate(&self.arch)?;
        self.qk = qk;
        Ok(())
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Scalars that receive updates: schedule-enabled QK tensors only.
    pub fn trainable_scalars(&self) -> usize {
        self.schedule.trainable_scalars(&self.arch)
    }

    /// Scalars held in memory across both copies.
    pub fn stored_scalars(&self) -> usize {
        self.sk.num_scalars() + self.qk.num_scalars()
    }

    /// Binary masks `1[z_SK > 0]` of every gated layer for batch `x`.
    pub fn compute_masks(&self, x: &Tensor) -> Result<ActivationMaskSet> {
        let out = nn::forward(&self.arch, &self.sk, x)?;
        Ok(ActivationMaskSet {
            masks: out.preacts.iter().map(BinaryMask::positive).collect(),
        })
    }

    /// QK forward pass where every gated layer emits `mask * z_QK`; no ReLU on the QK path.
    pub fn gated_forward(&self, masks: &ActivationMaskSet, x: &Tensor) -> Result<Tensor> {
        Ok(nn::run(&self.arch, &self.qk, x, nn::Gate::Fixed(&masks.masks))?.logits)
    }

    /// Loss and QK gradients under fixed masks, restricted to schedule-enabled layers.
    pub fn gated_backward(&self, masks: &ActivationMaskSet, x: &Tensor, labels: &[usize]) -> Result<(f64, GradientSet)> {
        let trace = nn::run(&self.arch, &self.qk, x, nn::Gate::Fixed(&masks.masks))?;
        nn::backprop(&self.arch, &self.qk, &trace, labels, self.schedule.trainable())
    }

    /// Masks computed from SK, then the gated QK forward pass.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let masks = self.compute_masks(x)?;
        self.gated_forward(&masks, x)
    }

    /// Composes the masked layer affinities into one map `logits = A x + b`.
    ///
    /// `masks` must describe a single sample (batch size one). The map is a
    /// function of the masks alone and holds for every input under them.
    pub fn extract_affine(&self, masks: &ActivationMaskSet) -> Result<AffineMap> {
        if masks.masks.len() != self.arch.gated_layers().len() {
            return Err(Error::Contract(format!(
                "{} masks for {} gated layers",
                masks.masks.len(),
                self.arch.gated_layers().len()
            )));
        }
        if masks.batch_size() != 1 {
            return Err(Error::Contract("extract_affine needs the masks of exactly one sample".into()));
        }
        let d = self.arch.input_dim();
        let mut basis = vec![0.0; d * d];
        for j in 0..d {
            basis[j * d + j] = 1.0;
        }
        let mut shape = vec![d];
        shape.extend_from_slice(self.arch.input_shape());
        // Row j of `linear` is the image of basis vector e_j under the linear part so far.
        let mut linear = Tensor::from_parts(shape.clone(), basis);
        shape[0] = 1;
        let mut offset = Tensor::zeros(&shape);

        let mut gate_idx = 0;
        for l in 0..self.arch.layers().len() {
            linear = nn::apply_layer(&self.arch, &self.qk, l, &linear, false)?;
            offset = nn::apply_layer(&self.arch, &self.qk, l, &offset, true)?;
            if self.arch.layers()[l].gated {
                let bits = masks.masks[gate_idx].bits();
                if bits.len() != offset.len() {
                    return Err(Error::Contract(format!("mask for layer {l} does not match its output")));
                }
                let tiled: Vec<bool> = bits.iter().copied().cycle().take(linear.len()).collect();
                linear = nn::gate_select(&linear, &tiled);
                offset = nn::gate_select(&offset, bits);
                gate_idx += 1;
            }
        }
        let k = self.arch.num_classes();
        let mut a = vec![0.0; k * d];
        for j in 0..d {
            for r in 0..k {
                a[r * d + j] = linear.data()[j * k + r];
            }
        }
        Ok(AffineMap {
            a: Tensor::from_parts(vec![k, d], a),
            b: Tensor::from_parts(vec![k], offset.into_data()),
        })
    }
}
