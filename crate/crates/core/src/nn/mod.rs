//! Minimal feed-forward network engine: dense and 2-D convolution layers,
//! ReLU gating, softmax cross-entropy, reverse-mode gradients and plain SGD.

mod arch;
mod engine;
mod loss;
mod ops;
mod optim;
mod params;

pub use arch::{LayerKind, LayerSpec, ModelArch};
pub use engine::{backward, forward, BinaryMask, ForwardOutput};
pub use loss::{argmax_rows, loss_ce};
pub use optim::sgd_step;
pub use params::{GradientSet, LayerParams, ModelParams};

pub(crate) use engine::{apply_layer, backprop, gate_select, run, Gate};
