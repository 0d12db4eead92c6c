//! Batched LSTM cell with gate order input, forget, candidate, output.

use crate::error::{Error, Result};
use crate::nn::activations::sigmoid;
use crate::nn::linalg::{gemm, MatMut, MatRef};
use crate::nn::{ModelParams, Rng, Tensor};

/// Parameters: `{name}.w_ih` `[4H, n_in]`, `{name}.w_hh` `[4H, H]`, `{name}.bias` `[4H]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub name: String,
    pub n_in: usize,
    pub hidden: usize,
}

/// Hidden and cell state for a batch, each `[batch × hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Values from one forward step needed to back-propagate through it.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    batch: usize,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn new(name: impl Into<String>, n_in: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            n_in,
            hidden,
        }
    }

    pub fn w_ih_name(&self) -> String {
        format!("{}.w_ih", self.name)
    }

    pub fn w_hh_name(&self) -> String {
        format!("{}.w_hh", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.n_in + self.hidden + 1)
    }

    pub fn init(&self, params: &mut ModelParams, rng: &mut Rng) -> Result<()> {
        let h4 = 4 * self.hidden;
        let bound = 1.0 / ((self.n_in + self.hidden) as f64).sqrt();
        params.insert(self.w_ih_name(), Tensor::uniform(&[h4, self.n_in], bound, rng))?;
        params.insert(self.w_hh_name(), Tensor::uniform(&[h4, self.hidden], bound, rng))?;
        params.insert(self.bias_name(), Tensor::uniform(&[h4], bound, rng))
    }

    pub fn zero_state(&self, batch: usize) -> LstmState {
        LstmState {
            h: vec![0.0; batch * self.hidden],
            c: vec![0.0; batch * self.hidden],
        }
    }

    /// One cell update for a batch of inputs `x` (`[batch × n_in]`).
    pub fn step(
        &self,
        params: &ModelParams,
        x: &[f64],
        batch: usize,
        state: &LstmState,
    ) -> Result<(LstmState, LstmStepCache)> {
        let hd = self.hidden;
        if x.len() != batch * self.n_in || state.h.len() != batch * hd || state.c.len() != batch * hd
        {
            return Err(Error::shape(format!(
                "{}: x {} / h {} / c {} for batch {batch}, n_in {}, hidden {hd}",
                self.name,
                x.len(),
                state.h.len(),
                state.c.len(),
                self.n_in
            )));
        }
        let h4 = 4 * hd;
        let b = params.expect(&self.bias_name()).data();
        let mut z = Vec::with_capacity(batch * h4);
        for _ in 0..batch {
            z.extend_from_slice(b);
        }
        gemm(
            1.0,
            MatRef::new(x, batch, self.n_in),
            MatRef::new(params.expect(&self.w_ih_name()).data(), h4, self.n_in).t(),
            1.0,
            MatMut::new(&mut z, batch, h4),
        );
        gemm(
            1.0,
            MatRef::new(&state.h, batch, hd),
            MatRef::new(params.expect(&self.w_hh_name()).data(), h4, hd).t(),
            1.0,
            MatMut::new(&mut z, batch, h4),
        );
        let mut h = vec![0.0; batch * hd];
        let mut c = vec![0.0; batch * hd];
        let mut tanh_c = vec![0.0; batch * hd];
        for r in 0..batch {
            let zr = &mut z[r * h4..(r + 1) * h4];
            for k in 0..hd {
                let i = sigmoid(zr[k]);
                let f = sigmoid(zr[hd + k]);
                let g = zr[2 * hd + k].tanh();
                let o = sigmoid(zr[3 * hd + k]);
                zr[k] = i;
                zr[hd + k] = f;
                zr[2 * hd + k] = g;
                zr[3 * hd + k] = o;
                let idx = r * hd + k;
                c[idx] = f * state.c[idx] + i * g;
                tanh_c[idx] = c[idx].tanh();
                h[idx] = o * tanh_c[idx];
            }
        }
        let cache = LstmStepCache {
            batch,
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates: z,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Back-propagates `(d_h, d_c)` of this step's outputs; accumulates parameter
    /// gradients and returns `(d_x, d_h_prev, d_c_prev)`.
    pub fn step_backward(
        &self,
        params: &ModelParams,
        grads: &mut ModelParams,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let h4 = 4 * hd;
        let batch = cache.batch;
        let mut dz = vec![0.0; batch * h4];
        let mut dc_prev = vec![0.0; batch * hd];
        for r in 0..batch {
            let g = &cache.gates[r * h4..(r + 1) * h4];
            let dzr = &mut dz[r * h4..(r + 1) * h4];
            for k in 0..hd {
                let idx = r * hd + k;
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let tc = cache.tanh_c[idx];
                let d_o = dh[idx] * tc;
                let d_c = dc[idx] + dh[idx] * o * (1.0 - tc * tc);
                dzr[k] = d_c * gg * i * (1.0 - i);
                dzr[hd + k] = d_c * cache.c_prev[idx] * f * (1.0 - f);
                dzr[2 * hd + k] = d_c * i * (1.0 - gg * gg);
                dzr[3 * hd + k] = d_o * o * (1.0 - o);
                dc_prev[idx] = d_c * f;
            }
        }
        {
            let db = grads.expect_mut(&self.bias_name()).data_mut();
            for row in dz.chunks(h4) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        let dz_v = MatRef::new(&dz, batch, h4);
        gemm(
            1.0,
            dz_v.t(),
            MatRef::new(&cache.x, batch, self.n_in),
            1.0,
            MatMut::new(grads.expect_mut(&self.w_ih_name()).data_mut(), h4, self.n_in),
        );
        gemm(
            1.0,
            dz_v.t(),
            MatRef::new(&cache.h_prev, batch, hd),
            1.0,
            MatMut::new(grads.expect_mut(&self.w_hh_name()).data_mut(), h4, hd),
        );
        let mut dx = vec![0.0; batch * self.n_in];
        gemm(
            1.0,
            dz_v,
            MatRef::new(params.expect(&self.w_ih_name()).data(), h4, self.n_in),
            0.0,
            MatMut::new(&mut dx, batch, self.n_in),
        );
        let mut dh_prev = vec![0.0; batch * hd];
        gemm(
            1.0,
            dz_v,
            MatRef::new(params.expect(&self.w_hh_name()).data(), h4, hd),
            0.0,
            MatMut::new(&mut dh_prev, batch, hd),
        );
        (dx, dh_prev, dc_prev)
    }
}
