//! Batched dense and convolution kernels over flat row-major buffers.

/// Geometry of a 2-D convolution over a batch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Input coordinate hit by output position `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// `z[b, o] = bias[o] + sum_i w[o, i] * x[b, i]`; bias is skipped when `None`.
pub(crate) fn dense_forward(
    x: &[f64],
    batch: usize,
    in_dim: usize,
    out_dim: usize,
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut z = vec![0.0; batch * out_dim];
    for b in 0..batch {
        let xb = &x[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let wo = &weight[o * in_dim..(o + 1) * in_dim];
            let mut acc = bias.map_or(0.0, |bs| bs[o]);
            for (w, v) in wo.iter().zip(xb) {
                acc += w * v;
            }
            z[b * out_dim + o] = acc;
        }
    }
    z
}

/// Weight and bias gradients of a dense layer.
pub(crate) fn dense_param_grads(
    x: &[f64],
    dz: &[f64],
    batch: usize,
    in_dim: usize,
    out_dim: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    for b in 0..batch {
        let xb = &x[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let g = dz[b * out_dim + o];
            db[o] += g;
            for (w, v) in dw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(xb) {
                *w += g * v;
            }
        }
    }
    (dw, db)
}

/// Gradient of a dense layer with respect to its input.
pub(crate) fn dense_input_grad(
    dz: &[f64],
    weight: &[f64],
    batch: usize,
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; batch * in_dim];
    for b in 0..batch {
        let dxb = &mut dx[b * in_dim..(b + 1) * in_dim];
        for o in 0..out_dim {
            let g = dz[b * out_dim + o];
            for (d, w) in dxb.iter_mut().zip(&weight[o * in_dim..(o + 1) * in_dim]) {
                *d += g * w;
            }
        }
    }
    dx
}

/// Direct (nested-loop) convolution with zero padding.
pub(crate) fn conv_forward(x: &[f64], g: &ConvGeom, weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let k = g.kernel;
    let mut z = vec![0.0; g.batch * g.out_ch * g.out_h * g.out_w];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = bias.map_or(0.0, |bs| bs[o]);
                    for c in 0..g.in_ch {
                        for ky in 0..k {
                            let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                                let w = weight[((o * g.in_ch + c) * k + ky) * k + kx];
                                let v = x[((b * g.in_ch + c) * g.in_h + iy) * g.in_w + ix];
                                acc += w * v;
                            }
                        }
                    }
                    z[((b * g.out_ch + o) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    z
}

pub(crate) fn conv_param_grads(x: &[f64], dz: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let k = g.kernel;
    let mut dw = vec![0.0; g.out_ch * g.in_ch * k * k];
    let mut db = vec![0.0; g.out_ch];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let d = dz[((b * g.out_ch + o) * g.out_h + oy) * g.out_w + ox];
                    db[o] += d;
                    for c in 0..g.in_ch {
                        for ky in 0..k {
                            let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                                dw[((o * g.in_ch + c) * k + ky) * k + kx] +=
                                    d * x[((b * g.in_ch + c) * g.in_h + iy) * g.in_w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, db)
}

pub(crate) fn conv_input_grad(dz: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
    let k = g.kernel;
    let mut dx = vec![0.0; g.batch * g.in_ch * g.in_h * g.in_w];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let d = dz[((b * g.out_ch + o) * g.out_h + oy) * g.out_w + ox];
                    for c in 0..g.in_ch {
                        for ky in 0..k {
                            let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                                dx[((b * g.in_ch + c) * g.in_h + iy) * g.in_w + ix] +=
                                    d * weight[((o * g.in_ch + c) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
