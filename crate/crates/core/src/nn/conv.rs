//! One-dimensional dilated convolution over `[channels × time]` buffers.

use crate::error::Result;
use crate::nn::linalg::{gemm, MatMut, MatRef};
use crate::nn::{ModelParams, Rng, Tensor};

/// Where the kernel's taps sit relative to the output sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Taps at `t - d·(k-1) ..= t`; zeros on the left.
    Causal,
    /// Taps centred on `t`; requires `d·(k-1)` even.
    Centered,
}

/// Convolution layer description; weights live in [`ModelParams`] as
/// `{name}.weight` with shape `[kernel, c_out, c_in]` and `{name}.bias` `[c_out]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl Conv1d {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        padding: Padding,
    ) -> Self {
        assert!(kernel >= 1 && dilation >= 1);
        if padding == Padding::Centered {
            assert!(dilation * (kernel - 1) % 2 == 0, "centered conv needs even span");
        }
        Self {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            dilation,
            padding,
        }
    }

    /// 1×1 convolution (a per-time-step dense map).
    pub fn pointwise(name: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        Self::new(name, c_in, c_out, 1, 1, Padding::Causal)
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn num_params(&self) -> usize {
        self.kernel * self.c_out * self.c_in + self.c_out
    }

    /// Number of past samples (including the current one) an output can see.
    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn init(&self, params: &mut ModelParams, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / ((self.c_in * self.kernel) as f64).sqrt();
        params.insert(
            self.weight_name(),
            Tensor::uniform(&[self.kernel, self.c_out, self.c_in], bound, rng),
        )?;
        params.insert(self.bias_name(), Tensor::uniform(&[self.c_out], bound, rng))
    }

    fn tap_shift(&self, tap: usize) -> isize {
        let span = (self.dilation * (self.kernel - 1)) as isize;
        let offset = match self.padding {
            Padding::Causal => span,
            Padding::Centered => span / 2,
        };
        (tap * self.dilation) as isize - offset
    }

    /// Output positions `[lo, hi)` (clipped to `[p0, p1)`) whose tap lands inside `[0, t)`.
    fn valid_range(shift: isize, t: usize, p0: usize, p1: usize) -> (usize, usize) {
        let lo = (-shift).max(0) as usize;
        let hi = (t as isize - shift).clamp(0, t as isize) as usize;
        (lo.max(p0), hi.min(p1))
    }

    pub fn forward(&self, params: &ModelParams, x: &[f64], t: usize) -> Vec<f64> {
        self.forward_range(params, x, t, 0, t)
    }

    /// Outputs for time positions `p0..p1` only, as `[c_out × (p1 - p0)]`.
    pub fn forward_range(
        &self,
        params: &ModelParams,
        x: &[f64],
        t: usize,
        p0: usize,
        p1: usize,
    ) -> Vec<f64> {
        assert_eq!(x.len(), self.c_in * t, "{}: input shape", self.name);
        let w = params.expect(&self.weight_name()).data();
        let b = params.expect(&self.bias_name()).data();
        let width = p1 - p0;
        let mut y = vec![0.0; self.c_out * width];
        for (o, row) in y.chunks_mut(width.max(1)).enumerate().take(self.c_out) {
            row.iter_mut().for_each(|v| *v = b[o]);
        }
        let tap_len = self.c_out * self.c_in;
        for tap in 0..self.kernel {
            let s = self.tap_shift(tap);
            let (lo, hi) = Self::valid_range(s, t, p0, p1);
            if lo >= hi {
                continue;
            }
            let wj = MatRef::new(&w[tap * tap_len..(tap + 1) * tap_len], self.c_out, self.c_in);
            let xin = MatRef::new(x, self.c_in, t)
                .col_range((lo as isize + s) as usize, (hi as isize + s) as usize);
            let out = MatMut::new(&mut y, self.c_out, width).col_range(lo - p0, hi - p0);
            gemm(1.0, wj, xin, 1.0, out);
        }
        y
    }

    /// Accumulates weight gradients and returns `d_x` (`[c_in × t]`).
    pub fn backward(
        &self,
        params: &ModelParams,
        grads: &mut ModelParams,
        x: &[f64],
        t: usize,
        dy: &[f64],
    ) -> Vec<f64> {
        self.backward_range(params, grads, x, t, 0, t, dy)
    }

    /// Backward for an output computed by [`forward_range`](Self::forward_range).
    #[allow(clippy::too_many_arguments)]
    pub fn backward_range(
        &self,
        params: &ModelParams,
        grads: &mut ModelParams,
        x: &[f64],
        t: usize,
        p0: usize,
        p1: usize,
        dy: &[f64],
    ) -> Vec<f64> {
        let width = p1 - p0;
        assert_eq!(dy.len(), self.c_out * width);
        let mut dx = vec![0.0; self.c_in * t];
        {
            let db = grads.expect_mut(&self.bias_name()).data_mut();
            for o in 0..self.c_out {
                db[o] += dy[o * width..(o + 1) * width].iter().sum::<f64>();
            }
        }
        let w = params.expect(&self.weight_name()).data();
        let tap_len = self.c_out * self.c_in;
        for tap in 0..self.kernel {
            let s = self.tap_shift(tap);
            let (lo, hi) = Self::valid_range(s, t, p0, p1);
            if lo >= hi {
                continue;
            }
            let (in_lo, in_hi) = ((lo as isize + s) as usize, (hi as isize + s) as usize);
            let dy_v = MatRef::new(dy, self.c_out, width).col_range(lo - p0, hi - p0);
            {
                let dw = grads.expect_mut(&self.weight_name()).data_mut();
                let x_v = MatRef::new(x, self.c_in, t).col_range(in_lo, in_hi);
                gemm(
                    1.0,
                    dy_v,
                    x_v.t(),
                    1.0,
                    MatMut::new(&mut dw[tap * tap_len..(tap + 1) * tap_len], self.c_out, self.c_in),
                );
            }
            let wj = MatRef::new(&w[tap * tap_len..(tap + 1) * tap_len], self.c_out, self.c_in);
            gemm(
                1.0,
                wj.t(),
                dy_v,
                1.0,
                MatMut::new(&mut dx, self.c_in, t).col_range(in_lo, in_hi),
            );
        }
        dx
    }
}

/// Receptive field of a stack of convolutions applied in sequence.
pub fn stacked_receptive_field(layers: &[Conv1d]) -> usize {
    1 + layers
        .iter()
        .map(|l| l.dilation * (l.kernel - 1))
        .sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(conv: &Conv1d, params: &ModelParams, x: &[f64], t: usize) -> Vec<f64> {
        let w = params.expect(&conv.weight_name()).data();
        let b = params.expect(&conv.bias_name()).data();
        let mut y = vec![0.0; conv.c_out * t];
        for o in 0..conv.c_out {
            for n in 0..t {
                let mut acc = b[o];
                for j in 0..conv.kernel {
                    let src = n as isize + conv.tap_shift(j);
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    for i in 0..conv.c_in {
                        acc += w[(j * conv.c_out + o) * conv.c_in + i] * x[i * t + src as usize];
                    }
                }
                y[o * t + n] = acc;
            }
        }
        y
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = Rng::new(5);
        for padding in [Padding::Causal, Padding::Centered] {
            let conv = Conv1d::new("c", 3, 4, 3, 2, padding);
            let mut p = ModelParams::new();
            conv.init(&mut p, &mut rng).unwrap();
            let t = 11;
            let x: Vec<f64> = (0..3 * t).map(|_| rng.normal()).collect();
            let y = conv.forward(&p, &x, t);
            let expect = naive(&conv, &p, &x, t);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            let part = conv.forward_range(&p, &x, t, 4, 9);
            for o in 0..4 {
                for n in 4..9 {
                    assert!((part[o * 5 + n - 4] - expect[o * t + n]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_kernel_passes_input() {
        let conv = Conv1d::pointwise("id", 1, 1);
        let mut p = ModelParams::new();
        p.insert(conv.weight_name(), Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap())
            .unwrap();
        p.insert(conv.bias_name(), Tensor::zeros(&[1])).unwrap();
        let x = vec![0.3, -1.0, 2.5, 0.0];
        assert_eq!(conv.forward(&p, &x, 4), x);
    }

    #[test]
    fn causal_outputs_ignore_future_impulse() {
        let mut rng = Rng::new(9);
        let conv = Conv1d::new("c", 2, 2, 2, 4, Padding::Causal);
        let mut p = ModelParams::new();
        conv.init(&mut p, &mut rng).unwrap();
        let t = 20;
        let base = vec![0.0; 2 * t];
        let mut poked = base.clone();
        let pos = 12;
        poked[pos] = 1.0;
        poked[t + pos] = -2.0;
        let y0 = conv.forward(&p, &base, t);
        let y1 = conv.forward(&p, &poked, t);
        for o in 0..2 {
            for n in 0..pos {
                assert_eq!(y0[o * t + n], y1[o * t + n]);
            }
            assert_ne!(y0[o * t + pos], y1[o * t + pos]);
        }
    }

    #[test]
    fn receptive_field_of_doubling_stack() {
        let layers: Vec<Conv1d> = (0..7)
            .map(|i| Conv1d::new(format!("l{i}"), 1, 1, 2, 1 << i, Padding::Causal))
            .collect();
        assert_eq!(stacked_receptive_field(&layers), 128);
        assert_eq!(stacked_receptive_field(&layers[..1]), 2);
    }
}
