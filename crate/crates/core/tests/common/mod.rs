#![allow(dead_code)]

use fedsq::nn::{self, BinaryMask, LayerKind};
use fedsq::{DualCopyModel, ModelArch, ModelParams, Schedule, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_batch(arch: &ModelArch, batch: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut shape = vec![batch];
    shape.extend_from_slice(arch.input_shape());
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

pub fn random_labels(arch: &ModelArch, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..arch.num_classes())).collect()
}

/// Flat index ranges `[start, end)` of each parameterized layer in `flatten` order.
pub fn layer_ranges(params: &ModelParams) -> Vec<(usize, std::ops::Range<usize>)> {
    let mut start = 0;
    params
        .layers()
        .map(|(l, p)| {
            let r = start..start + p.num_scalars();
            start = r.end;
            (l, r)
        })
        .collect()
}

pub fn layer_kind_name(arch: &ModelArch, l: usize) -> &'static str {
    match arch.layers()[l].kind {
        LayerKind::Dense { .. } => "dense",
        LayerKind::Conv2d { .. } => "conv2d",
        LayerKind::Flatten => "flatten",
    }
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdStats {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel: f64,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares `grads` (aligned with `flatten` order of `params`, restricted to
/// `indices`) against `(f(p + eps) - f(p - eps)) / 2eps`. `kink(p_plus, p_minus)`
/// reports whether the perturbation crossed a non-differentiable point; such
/// coordinates are skipped and counted.
pub fn fd_compare<F, K>(params: &ModelParams, grads: &[f64], indices: &[usize], f: F, kink: K) -> FdStats
where
    F: Fn(&ModelParams) -> f64,
    K: Fn(&ModelParams, &ModelParams) -> bool,
{
    let base = params.flatten();
    let mut stats = FdStats::default();
    for &i in indices {
        let mut plus = base.clone();
        plus[i] += FD_EPS;
        let mut minus = base.clone();
        minus[i] -= FD_EPS;
        let (pp, pm) = (params.with_flat(&plus).unwrap(), params.with_flat(&minus).unwrap());
        if kink(&pp, &pm) {
            stats.skipped_kinks += 1;
            continue;
        }
        let numeric = (f(&pp) - f(&pm)) / (2.0 * FD_EPS);
        stats.checked += 1;
        stats.max_rel = stats.max_rel.max(rel_err(grads[i], numeric));
    }
    stats
}

/// Plain ReLU-network gradient check over the given flat indices.
pub fn fd_check_relu(arch: &ModelArch, params: &ModelParams, x: &Tensor, y: &[usize], indices: &[usize]) -> FdStats {
    let trainable = vec![true; arch.num_param_layers()];
    let (_, grads) = nn::backward(arch, params, x, y, &trainable).unwrap();
    let gflat = grads.flatten();
    let pattern = |p: &ModelParams| -> Vec<Vec<bool>> {
        nn::forward(arch, p, x)
            .unwrap()
            .preacts
            .iter()
            .map(|z| BinaryMask::positive(z).bits().to_vec())
            .collect()
    };
    fd_compare(
        params,
        &gflat,
        indices,
        |p| nn::loss_ce(&nn::forward(arch, p, x).unwrap().logits, y).unwrap(),
        |a, b| pattern(a) != pattern(b),
    )
}

/// Fixed-mask (QK) gradient check: masks come from `sk` and stay fixed.
pub fn fd_check_gated(model: &DualCopyModel, x: &Tensor, y: &[usize], indices: &[usize]) -> FdStats {
    let masks = model.compute_masks(x).unwrap();
    let (_, grads) = model.gated_backward(&masks, x, y).unwrap();
    let gflat = grads.flatten();
    let loss = |qk: &ModelParams| {
        let m = DualCopyModel::from_parts(model.arch().clone(), model.sk().clone(), qk.clone(), model.schedule().clone())
            .unwrap();
        nn::loss_ce(&m.gated_forward(&masks, x).unwrap(), y).unwrap()
    };
    fd_compare(model.qk(), &gflat, indices, loss, |_, _| false)
}

/// Small conv net: conv(pad 1) -> conv(stride 2) -> flatten -> dense head.
pub fn conv_arch() -> ModelArch {
    use fedsq::LayerSpec;
    ModelArch::new(
        vec![2, 6, 6],
        vec![
            LayerSpec::conv2d(2, 3, 3, 1, 1).relu(),
            LayerSpec::conv2d(3, 4, 3, 2, 1).relu(),
            LayerSpec::flatten(),
            LayerSpec::dense(36, 3),
        ],
        3,
    )
    .unwrap()
}

/// Random QK offset from SK so the gated path differs from ReLU.
pub fn perturbed(params: &ModelParams, scale: f64, rng: &mut ChaCha8Rng) -> ModelParams {
    let flat: Vec<f64> = params
        .flatten()
        .iter()
        .map(|v| v + scale * rng.random_range(-1.0..1.0))
        .collect();
    params.with_flat(&flat).unwrap()
}

pub fn dual(arch: &ModelArch, sk: &ModelParams, qk: &ModelParams) -> DualCopyModel {
    DualCopyModel::from_parts(arch.clone(), sk.clone(), qk.clone(), Schedule::all(arch)).unwrap()
}

/// Independent direct-definition convolution on one sample (CHW), zero padding.
pub fn brute_conv(
    x: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(out_ch * oh * ow);
    for o in 0..out_ch {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = bias[o];
                for c in 0..in_ch {
                    for a in 0..k {
                        for b in 0..k {
                            let r = (i * stride + a) as isize - pad as isize;
                            let q = (j * stride + b) as isize - pad as isize;
                            if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < w {
                                s += weight[((o * in_ch + c) * k + a) * k + b] * x[(c * h + r as usize) * w + q as usize];
                            }
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    out
}
