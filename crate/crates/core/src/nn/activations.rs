use crate::error::{Error, Result};
use crate::nn::Tensor;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh(a) ⊙ sigmoid(b)`.
pub fn gated_activation(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "gated activation operands {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let g = Gated::forward(a.data(), b.data());
    Tensor::from_vec(a.shape(), g.out)
}

/// Forward values of a gated unit, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Gated {
    pub out: Vec<f64>,
    tanh_a: Vec<f64>,
    sig_b: Vec<f64>,
}

impl Gated {
    pub fn forward(a: &[f64], b: &[f64]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let tanh_a: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
        let sig_b: Vec<f64> = b.iter().map(|&v| sigmoid(v)).collect();
        let out = tanh_a.iter().zip(&sig_b).map(|(t, s)| t * s).collect();
        Self { out, tanh_a, sig_b }
    }

    /// Returns `(d_a, d_b)`.
    pub fn backward(&self, d_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut da = Vec::with_capacity(d_out.len());
        let mut db = Vec::with_capacity(d_out.len());
        for ((&g, &t), &s) in d_out.iter().zip(&self.tanh_a).zip(&self.sig_b) {
            da.push(g * s * (1.0 - t * t));
            db.push(g * t * s * (1.0 - s));
        }
        (da, db)
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through a ReLU given its pre-activation input.
pub fn relu_backward(d_out: &[f64], pre: &[f64]) -> Vec<f64> {
    d_out
        .iter()
        .zip(pre)
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

pub fn leaky_relu_backward(d_out: &[f64], pre: &[f64], slope: f64) -> Vec<f64> {
    d_out
        .iter()
        .zip(pre)
        .map(|(&g, &x)| if x > 0.0 { g } else { slope * g })
        .collect()
}
