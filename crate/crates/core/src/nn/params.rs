use std::collections::BTreeMap;

use rand::Rng;

use super::arch::ModelArch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weight and bias of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn num_scalars(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Parameter tensors keyed by layer index, tagged with the architecture fingerprint.
///
/// Also used (see [`GradientSet`]) to carry gradients, in which case only a
/// subset of layers may be present.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    fingerprint: String,
    entries: BTreeMap<usize, LayerParams>,
}

/// Gradients with the same layout as [`ModelParams`]; frozen layers are absent.
pub type GradientSet = ModelParams;

impl ModelParams {
    pub(crate) fn from_entries(fingerprint: String, entries: BTreeMap<usize, LayerParams>) -> Self {
        Self { fingerprint, entries }
    }

    /// He-style uniform initialization, bound `sqrt(6 / fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &ModelArch, rng: &mut R) -> Self {
        let mut entries = BTreeMap::new();
        for &l in arch.param_layers() {
            let spec = &arch.layers()[l];
            let bound = (6.0 / spec.fan_in() as f64).sqrt();
            let wshape = spec.weight_shape().unwrap();
            let n: usize = wshape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            entries.insert(
                l,
                LayerParams {
                    weight: Tensor::from_parts(wshape, data),
                    bias: Tensor::zeros(&spec.bias_shape().unwrap()),
                },
            );
        }
        Self {
            fingerprint: arch.fingerprint(),
            entries,
        }
    }

    pub fn zeros(arch: &ModelArch) -> Self {
        let entries = arch
            .param_layers()
            .iter()
            .map(|&l| {
                let spec = &arch.layers()[l];
                (
                    l,
                    LayerParams {
                        weight: Tensor::zeros(&spec.weight_shape().unwrap()),
                        bias: Tensor::zeros(&spec.bias_shape().unwrap()),
                    },
                )
            })
            .collect();
        Self {
            fingerprint: arch.fingerprint(),
            entries,
        }
    }

    /// An empty gradient set for `arch`.
    pub fn empty(arch: &ModelArch) -> Self {
        Self {
            fingerprint: arch.fingerprint(),
            entries: BTreeMap::new(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn get(&self, layer: usize) -> Option<&LayerParams> {
        self.entries.get(&layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.entries.get_mut(&layer)
    }

    pub(crate) fn insert(&mut self, layer: usize, params: LayerParams) {
        self.entries.insert(layer, params);
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.entries.iter().map(|(&l, p)| (l, p))
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = (usize, &mut LayerParams)> {
        self.entries.iter_mut().map(|(&l, p)| (l, p))
    }

    pub fn layer_indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(LayerParams::num_scalars).sum()
    }

    /// All scalars in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in self.entries.values() {
            out.extend_from_slice(p.weight.data());
            out.extend_from_slice(p.bias.data());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten): same layout, new scalars.
    pub fn with_flat(&self, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Input(format!(
                "expected {} scalars, got {}",
                self.num_scalars(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut rest = flat;
        for p in out.entries.values_mut() {
            for t in [&mut p.weight, &mut p.bias] {
                let (head, tail) = rest.split_at(t.len());
                *t = Tensor::new(t.shape().to_vec(), head.to_vec())?;
                rest = tail;
            }
        }
        Ok(out)
    }

    /// Checks that this parameter set matches `arch` exactly.
    pub fn validate(&self, arch: &ModelArch) -> Result<()> {
        if self.fingerprint != arch.fingerprint() {
            return Err(Error::Config(format!(
                "parameters belong to architecture {} but model is {}",
                self.fingerprint,
                arch.fingerprint()
            )));
        }
        if self.entries.len() != arch.num_param_layers() {
            return Err(Error::Config(format!(
                "expected {} parameterized layers, found {}",
                arch.num_param_layers(),
                self.entries.len()
            )));
        }
        for &l in arch.param_layers() {
            let spec = &arch.layers()[l];
            let p = self
                .entries
                .get(&l)
                .ok_or_else(|| Error::Config(format!("missing parameters for layer {l}")))?;
            if p.weight.shape() != spec.weight_shape().unwrap().as_slice()
                || p.bias.shape() != spec.bias_shape().unwrap().as_slice()
            {
                return Err(Error::Config(format!(
                    "layer {l}: parameter shapes {:?}/{:?} do not match the layer",
                    p.weight.shape(),
                    p.bias.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        let congruent = self.fingerprint == other.fingerprint
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((la, a), (lb, b))| {
                la == lb && a.weight.same_shape(&b.weight) && a.bias.same_shape(&b.bias)
            });
        if congruent {
            Ok(())
        } else {
            Err(Error::Internal("parameter sets are not shape-congruent".into()))
        }
    }

    /// `self + scale * other`, element-wise.
    pub fn add_scaled(&self, other: &ModelParams, scale: f64) -> Result<ModelParams> {
        let mut out = self.clone();
        out.add_scaled_in_place(other, scale)?;
        Ok(out)
    }

    pub(crate) fn add_scaled_in_place(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scaled(&self, scale: f64) -> ModelParams {
        let mut out = self.clone();
        for p in out.entries.values_mut() {
            p.weight.data_mut().iter_mut().for_each(|x| *x *= scale);
            p.bias.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
        out
    }

    /// Largest element-wise absolute difference; infinite when layouts differ.
    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        if self.check_congruent(other).is_err() {
            return f64::INFINITY;
        }
        self.entries
            .values()
            .zip(other.entries.values())
            .map(|(a, b)| a.weight.max_abs_diff(&b.weight).max(a.bias.max_abs_diff(&b.bias)))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .values()
            .all(|p| p.weight.is_finite() && p.bias.is_finite())
    }
}
