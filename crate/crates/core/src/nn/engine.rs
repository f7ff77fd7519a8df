//! Layer-by-layer forward pass with pluggable gating, and its reverse pass.
//!
//! Plain ReLU networks and fixed-mask (gated) networks share one engine: a
//! gated layer keeps its pre-activation where the gate is open and emits zero
//! elsewhere. For ReLU the gate is `z > 0` of the layer's own pre-activation;
//! for the fixed-mask path the gate is supplied by the caller.

use super::arch::{LayerKind, ModelArch};
use super::loss::softmax_cross_entropy;
use super::ops::{self, ConvGeom};
use super::params::{GradientSet, LayerParams, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A binary tensor; `bits` is row-major over `shape` (batch dimension first).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != bits.len() {
            return Err(Error::Input(format!(
                "mask shape {shape:?} does not hold {} bits",
                bits.len()
            )));
        }
        Ok(Self { shape, bits })
    }

    /// Strict positivity: zero closes the gate.
    pub fn positive(z: &Tensor) -> Self {
        Self {
            shape: z.shape().to_vec(),
            bits: z.data().iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn filled(shape: &[usize], open: bool) -> Self {
        Self {
            shape: shape.to_vec(),
            bits: vec![open; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Mask values as a 0/1 tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn count_open(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Gate<'a> {
    Relu,
    Fixed(&'a [BinaryMask]),
}

/// Everything the reverse pass needs from a forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Input of each layer (batch-leading).
    pub inputs: Vec<Tensor>,
    /// Pre-activations of gated layers, in layer order.
    pub preacts: Vec<Tensor>,
    /// Gate bits applied at each gated layer.
    pub gates: Vec<Vec<bool>>,
    pub logits: Tensor,
}

/// Result of a plain forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor,
    /// Pre-activation of every gated layer, in layer order.
    pub preacts: Vec<Tensor>,
}

fn layer_name(arch: &ModelArch, l: usize) -> String {
    let kind = match arch.layers()[l].kind {
        LayerKind::Dense { .. } => "dense",
        LayerKind::Conv2d { .. } => "conv2d",
        LayerKind::Flatten => "flatten",
    };
    format!("layer {l} ({kind})")
}

pub(crate) fn check_batch(arch: &ModelArch, x: &Tensor) -> Result<usize> {
    if x.shape().len() != arch.input_shape().len() + 1 || &x.shape()[1..] != arch.input_shape() {
        return Err(Error::Config(format!(
            "batch shape {:?} does not match model input {:?} with a leading batch dimension",
            x.shape(),
            arch.input_shape()
        )));
    }
    Ok(x.rows())
}

fn conv_geom(arch: &ModelArch, l: usize, batch: usize) -> ConvGeom {
    let LayerKind::Conv2d {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
    } = arch.layers()[l].kind
    else {
        unreachable!("conv_geom on a non-convolution layer")
    };
    let input = arch.layer_input_shape(l);
    let output = arch.output_shape(l);
    ConvGeom {
        batch,
        in_ch,
        in_h: input[1],
        in_w: input[2],
        out_ch,
        out_h: output[1],
        out_w: output[2],
        kernel,
        stride,
        padding,
    }
}

fn batched(batch: usize, per_sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(per_sample.len() + 1);
    s.push(batch);
    s.extend_from_slice(per_sample);
    s
}

/// Applies the affine (or reshaping) part of layer `l`; `with_bias = false` gives the linear part only.
pub(crate) fn apply_layer(
    arch: &ModelArch,
    params: &ModelParams,
    l: usize,
    h: &Tensor,
    with_bias: bool,
) -> Result<Tensor> {
    let batch = h.rows();
    let out_shape = batched(batch, arch.output_shape(l));
    let spec = &arch.layers()[l];
    let data = match spec.kind {
        LayerKind::Flatten => return h.clone().reshape(out_shape),
        LayerKind::Dense { in_dim, out_dim } => {
            let p = layer_params(params, l)?;
            ops::dense_forward(
                h.data(),
                batch,
                in_dim,
                out_dim,
                p.weight.data(),
                with_bias.then(|| p.bias.data()),
            )
        }
        LayerKind::Conv2d { .. } => {
            let p = layer_params(params, l)?;
            ops::conv_forward(
                h.data(),
                &conv_geom(arch, l, batch),
                p.weight.data(),
                with_bias.then(|| p.bias.data()),
            )
        }
    };
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            layer_name(arch, l),
            format!("non-finite pre-activation at flat index {pos}"),
        ));
    }
    Ok(Tensor::from_parts(out_shape, data))
}

fn layer_params(params: &ModelParams, l: usize) -> Result<&LayerParams> {
    params
        .get(l)
        .ok_or_else(|| Error::Internal(format!("no parameters for layer {l}")))
}

/// Keeps `z` where the gate is open and writes zero elsewhere.
pub(crate) fn gate_select(z: &Tensor, gate: &[bool]) -> Tensor {
    let data = z
        .data()
        .iter()
        .zip(gate)
        .map(|(&v, &open)| if open { v } else { 0.0 })
        .collect();
    Tensor::from_parts(z.shape().to_vec(), data)
}

fn check_masks(arch: &ModelArch, masks: &[BinaryMask], batch: usize) -> Result<()> {
    if masks.len() != arch.gated_layers().len() {
        return Err(Error::Contract(format!(
            "{} masks supplied for {} gated layers",
            masks.len(),
            arch.gated_layers().len()
        )));
    }
    for (mask, &l) in masks.iter().zip(arch.gated_layers()) {
        let expected = batched(batch, arch.output_shape(l));
        if mask.shape() != expected.as_slice() {
            return Err(Error::Contract(format!(
                "mask for layer {l} has shape {:?}, batch pre-activation is {expected:?}",
                mask.shape()
            )));
        }
    }
    Ok(())
}

pub(crate) fn run(arch: &ModelArch, params: &ModelParams, x: &Tensor, gate: Gate<'_>) -> Result<Trace> {
    let batch = check_batch(arch, x)?;
    if let Gate::Fixed(masks) = gate {
        check_masks(arch, masks, batch)?;
    }
    let mut inputs = Vec::with_capacity(arch.layers().len());
    let mut preacts = Vec::with_capacity(arch.gated_layers().len());
    let mut gates = Vec::with_capacity(arch.gated_layers().len());
    let mut h = x.clone();
    for l in 0..arch.layers().len() {
        let z = apply_layer(arch, params, l, &h, true)?;
        inputs.push(h);
        h = if arch.layers()[l].gated {
            let bits = match gate {
                Gate::Relu => z.data().iter().map(|&v| v > 0.0).collect(),
                Gate::Fixed(masks) => masks[gates.len()].bits().to_vec(),
            };
            let out = gate_select(&z, &bits);
            preacts.push(z);
            gates.push(bits);
            out
        } else {
            z
        };
    }
    Ok(Trace {
        inputs,
        preacts,
        gates,
        logits: h,
    })
}

/// Plain forward pass: ReLU after gated layers, identity elsewhere.
pub fn forward(arch: &ModelArch, params: &ModelParams, x: &Tensor) -> Result<ForwardOutput> {
    let trace = run(arch, params, x, Gate::Relu)?;
    Ok(ForwardOutput {
        logits: trace.logits,
        preacts: trace.preacts,
    })
}

pub(crate) fn check_trainable(arch: &ModelArch, trainable: &[bool]) -> Result<()> {
    if trainable.len() != arch.num_param_layers() {
        return Err(Error::Config(format!(
            "trainable mask has {} entries for {} parameterized layers",
            trainable.len(),
            arch.num_param_layers()
        )));
    }
    Ok(())
}

/// Reverse pass over a recorded trace; gradients only for trainable layers.
pub(crate) fn backprop(
    arch: &ModelArch,
    params: &ModelParams,
    trace: &Trace,
    labels: &[usize],
    trainable: &[bool],
) -> Result<(f64, GradientSet)> {
    check_trainable(arch, trainable)?;
    let (loss, dlogits) = softmax_cross_entropy(&trace.logits, labels)?;
    let mut grads = ModelParams::empty(arch);
    let Some(lowest) = arch
        .param_layers()
        .iter()
        .zip(trainable)
        .find_map(|(&l, &t)| t.then_some(l))
    else {
        return Ok((loss, grads));
    };

    let batch = trace.logits.rows();
    let mut delta = dlogits;
    let mut gate_idx = trace.gates.len();
    for l in (lowest..arch.layers().len()).rev() {
        let spec = &arch.layers()[l];
        if spec.gated {
            gate_idx -= 1;
            delta = gate_select(&delta, &trace.gates[gate_idx]);
        }
        let input = &trace.inputs[l];
        let is_trainable = arch.param_ordinal(l).is_some_and(|o| trainable[o]);
        match spec.kind {
            LayerKind::Flatten => {
                delta = delta.reshape(input.shape().to_vec())?;
            }
            LayerKind::Dense { in_dim, out_dim } => {
                let p = layer_params(params, l)?;
                if is_trainable {
                    let (dw, db) = ops::dense_param_grads(input.data(), delta.data(), batch, in_dim, out_dim);
                    grads.insert(l, grad_entry(arch, l, p, dw, db)?);
                }
                if l > lowest {
                    let dx = ops::dense_input_grad(delta.data(), p.weight.data(), batch, in_dim, out_dim);
                    delta = Tensor::from_parts(input.shape().to_vec(), dx);
                }
            }
            LayerKind::Conv2d { .. } => {
                let p = layer_params(params, l)?;
                let geom = conv_geom(arch, l, batch);
                if is_trainable {
                    let (dw, db) = ops::conv_param_grads(input.data(), delta.data(), &geom);
                    grads.insert(l, grad_entry(arch, l, p, dw, db)?);
                }
                if l > lowest {
                    let dx = ops::conv_input_grad(delta.data(), p.weight.data(), &geom);
                    delta = Tensor::from_parts(input.shape().to_vec(), dx);
                }
            }
        }
    }
    Ok((loss, grads))
}

fn grad_entry(arch: &ModelArch, l: usize, p: &LayerParams, dw: Vec<f64>, db: Vec<f64>) -> Result<LayerParams> {
    if dw.iter().chain(&db).any(|v| !v.is_finite()) {
        return Err(Error::numeric(layer_name(arch, l), "non-finite gradient"));
    }
    Ok(LayerParams {
        weight: Tensor::from_parts(p.weight.shape().to_vec(), dw),
        bias: Tensor::from_parts(p.bias.shape().to_vec(), db),
    })
}

/// Mean cross-entropy loss and gradients of the trainable layers.
///
/// Frozen layers still take part in the chain rule but receive no entry in
/// the returned [`GradientSet`].
pub fn backward(
    arch: &ModelArch,
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    trainable: &[bool],
) -> Result<(f64, GradientSet)> {
    check_trainable(arch, trainable)?;
    let trace = run(arch, params, x, Gate::Relu)?;
    backprop(arch, params, &trace, labels, trainable)
}
