use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The operation a layer performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Flatten,
}

fn one() -> usize {
    1
}

/// A layer plus whether a ReLU gate follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub gated: bool,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Dense { in_dim, out_dim },
            gated: false,
        }
    }

    pub fn conv2d(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            },
            gated: false,
        }
    }

    pub fn flatten() -> Self {
        Self {
            kind: LayerKind::Flatten,
            gated: false,
        }
    }

    /// Marks the layer as followed by a ReLU gate.
    pub fn relu(mut self) -> Self {
        self.gated = true;
        self
    }

    pub fn has_params(&self) -> bool {
        !matches!(self.kind, LayerKind::Flatten)
    }

    /// Weight tensor shape, `None` for parameter-free layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Dense { in_dim, out_dim } => Some(vec![out_dim, in_dim]),
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some(vec![out_ch, in_ch, kernel, kernel]),
            LayerKind::Flatten => None,
        }
    }

    pub fn bias_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Dense { out_dim, .. } => Some(vec![out_dim]),
            LayerKind::Conv2d { out_ch, .. } => Some(vec![out_ch]),
            LayerKind::Flatten => None,
        }
    }

    /// Number of inputs feeding one output unit; drives initialization scale.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { in_dim, .. } => in_dim,
            LayerKind::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerKind::Flatten => 0,
        }
    }

    /// Output shape (without batch dimension) for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self.kind {
            LayerKind::Dense { in_dim, out_dim } => {
                if input != [in_dim] {
                    return Err(Error::Config(format!(
                        "dense layer expects input [{in_dim}], got {input:?}"
                    )));
                }
                Ok(vec![out_dim])
            }
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_ch {
                    return Err(Error::Config(format!(
                        "conv2d layer expects input [{in_ch}, H, W], got {input:?}"
                    )));
                }
                if kernel == 0 || stride == 0 {
                    return Err(Error::Config("conv2d kernel and stride must be positive".into()));
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < kernel || w < kernel {
                    return Err(Error::Config(format!(
                        "conv2d kernel {kernel} larger than padded input {h}x{w}"
                    )));
                }
                Ok(vec![out_ch, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn describe(&self) -> String {
        let gate = if self.gated { "+relu" } else { "" };
        match self.kind {
            LayerKind::Dense { in_dim, out_dim } => format!("dense({in_dim},{out_dim}){gate}"),
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => format!("conv2d({in_ch},{out_ch},k{kernel},s{stride},p{padding}){gate}"),
            LayerKind::Flatten => "flatten".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchDef {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    num_classes: usize,
}

/// A validated feed-forward architecture: gated blocks followed by a dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchDef", into = "ArchDef")]
pub struct ModelArch {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    num_classes: usize,
    /// Per-sample output shape of every layer.
    shapes: Vec<Vec<usize>>,
    /// Indices (into `layers`) of layers that own parameters.
    param_layers: Vec<usize>,
    gated_layers: Vec<usize>,
}

impl TryFrom<ArchDef> for ModelArch {
    type Error = Error;

    fn try_from(def: ArchDef) -> Result<Self> {
        ModelArch::new(def.input_shape, def.layers, def.num_classes)
    }
}

impl From<ModelArch> for ArchDef {
    fn from(a: ModelArch) -> Self {
        ArchDef {
            input_shape: a.input_shape,
            layers: a.layers,
            num_classes: a.num_classes,
        }
    }
}

impl ModelArch {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {input_shape:?}")));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let Some(head) = layers.last() else {
            return Err(Error::Config("architecture has no layers".into()));
        };
        match head.kind {
            LayerKind::Dense { out_dim, .. } if out_dim == num_classes && !head.gated => {}
            _ => {
                return Err(Error::Config(format!(
                    "last layer must be an ungated dense head onto {num_classes} classes"
                )))
            }
        }

        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            if matches!(layer.kind, LayerKind::Flatten) && layer.gated {
                return Err(Error::Config(format!("layer {i}: flatten cannot be gated")));
            }
            current = layer
                .output_shape(&current)
                .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
            shapes.push(current.clone());
        }

        let param_layers: Vec<usize> = (0..layers.len()).filter(|&i| layers[i].has_params()).collect();
        let gated_layers: Vec<usize> = (0..layers.len()).filter(|&i| layers[i].gated).collect();
        if gated_layers.is_empty() {
            return Err(Error::Config("architecture needs at least one gated layer".into()));
        }

        Ok(Self {
            input_shape,
            layers,
            num_classes,
            shapes,
            param_layers,
            gated_layers,
        })
    }

    /// Multilayer perceptron with ReLU after every hidden layer.
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(LayerSpec::dense(prev, h).relu());
            prev = h;
        }
        layers.push(LayerSpec::dense(prev, num_classes));
        Self::new(vec![input_dim], layers, num_classes)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample output shape of layer `i`.
    pub fn output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Per-sample input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn param_layers(&self) -> &[usize] {
        &self.param_layers
    }

    pub fn num_param_layers(&self) -> usize {
        self.param_layers.len()
    }

    pub fn gated_layers(&self) -> &[usize] {
        &self.gated_layers
    }

    /// Ordinal of a layer among parameterized layers.
    pub fn param_ordinal(&self, layer: usize) -> Option<usize> {
        self.param_layers.iter().position(|&l| l == layer)
    }

    /// Stable textual identity of the architecture, hashed into checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut text = format!("in{:?};classes{};", self.input_shape, self.num_classes);
        for layer in &self.layers {
            text.push_str(&layer.describe());
            text.push(';');
        }
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Total number of scalars across all parameter tensors.
    pub fn num_scalars(&self) -> usize {
        self.param_layers
            .iter()
            .map(|&l| {
                let spec = &self.layers[l];
                spec.weight_shape().unwrap().iter().product::<usize>()
                    + spec.bias_shape().unwrap().iter().product::<usize>()
            })
            .sum()
    }
}
