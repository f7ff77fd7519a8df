use super::arch::ModelArch;
use super::engine::check_trainable;
use super::params::{GradientSet, ModelParams};
use crate::error::{Error, Result};

/// One plain SGD step with L2 weight decay folded into the gradient: `p - lr * (g + wd * p)`.
///
/// Frozen layers are copied through unchanged; every trainable layer must
/// have a gradient entry.
pub fn sgd_step(
    arch: &ModelArch,
    params: &ModelParams,
    grads: &GradientSet,
    lr: f64,
    wd: f64,
    trainable: &[bool],
) -> Result<ModelParams> {
    if !(lr >= 0.0 && lr.is_finite()) || !(wd >= 0.0 && wd.is_finite()) {
        return Err(Error::Input(format!("invalid step sizes lr={lr}, wd={wd}")));
    }
    check_trainable(arch, trainable)?;
    let mut out = params.clone();
    for (&l, &on) in arch.param_layers().iter().zip(trainable) {
        if !on {
            continue;
        }
        let g = grads
            .get(l)
            .ok_or_else(|| Error::Internal(format!("trainable layer {l} has no gradient")))?;
        let p = out
            .get_mut(l)
            .ok_or_else(|| Error::Internal(format!("no parameters for layer {l}")))?;
        if !p.weight.same_shape(&g.weight) || !p.bias.same_shape(&g.bias) {
            return Err(Error::Internal(format!("gradient shape mismatch at layer {l}")));
        }
        for (x, d) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
            *x -= lr * (d + wd * *x);
        }
        for (x, d) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
            *x -= lr * (d + wd * *x);
        }
        if !p.weight.is_finite() || !p.bias.is_finite() {
            return Err(Error::numeric(format!("layer {l}"), "SGD step produced non-finite parameters"));
        }
    }
    Ok(out)
}
