use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy of a `[batch, classes]` logit tensor, with its gradient.
pub(crate) fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::Input(format!("logits must be [batch, classes], got {:?}", logits.shape())));
    }
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(Error::Input(format!("{} labels for {batch} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {bad} out of range for {classes} classes")));
    }
    let mut total = 0.0;
    let mut grad = vec![0.0; batch * classes];
    let scale = 1.0 / batch as f64;
    for (b, &y) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        total += log_norm - row[y];
        let g = &mut grad[b * classes..(b + 1) * classes];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - log_norm).exp() * scale;
        }
        g[y] -= scale;
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::numeric("cross-entropy", "non-finite loss"));
    }
    Ok((loss, Tensor::from_parts(vec![batch, classes], grad)))
}

/// Mean softmax cross-entropy, stabilized by max-subtraction.
pub fn loss_ce(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    softmax_cross_entropy(logits, labels).map(|(l, _)| l)
}

/// Index of the largest logit in each row; the first wins ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|b| {
            let row = logits.row(b);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
