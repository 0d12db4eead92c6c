//! Loss functions returning `(loss, d_loss/d_input)`.

use crate::nn::activations::sigmoid;

/// Softmax over `q` classes for each of `t` columns of a `[q × t]` buffer.
pub fn softmax_columns(logits: &[f64], q: usize, t: usize) -> Vec<f64> {
    assert_eq!(logits.len(), q * t);
    let mut out = vec![0.0; q * t];
    for col in 0..t {
        let max = (0..q)
            .map(|r| logits[r * t + col])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in 0..q {
            let e = (logits[r * t + col] - max).exp();
            out[r * t + col] = e;
            sum += e;
        }
        for r in 0..q {
            out[r * t + col] /= sum;
        }
    }
    out
}

/// Mean categorical cross-entropy over columns of `[q × t]` logits.
pub fn softmax_cross_entropy(logits: &[f64], q: usize, t: usize, targets: &[usize]) -> (f64, Vec<f64>) {
    assert_eq!(targets.len(), t);
    let mut grad = softmax_columns(logits, q, t);
    let mut loss = 0.0;
    let scale = 1.0 / t as f64;
    for (col, &target) in targets.iter().enumerate() {
        let p = grad[target * t + col];
        loss -= p.max(f64::MIN_POSITIVE).ln();
        grad[target * t + col] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let d = p - y;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}

/// Mean binary cross-entropy on logits with labels in `{0, 1}`.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), labels.len());
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, written to avoid overflow
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (sigmoid(z) - y) / n
        })
        .collect();
    (loss / n, grad)
}
