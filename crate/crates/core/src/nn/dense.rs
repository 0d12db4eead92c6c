use crate::error::Result;
use crate::nn::linalg::{gemm, MatMut, MatRef};
use crate::nn::{ModelParams, Rng, Tensor};

/// Fully connected layer on `[batch × n_in]` row-major inputs.
/// Parameters: `{name}.weight` `[n_out, n_in]`, `{name}.bias` `[n_out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, n_in: usize, n_out: usize) -> Self {
        Self {
            name: name.into(),
            n_in,
            n_out,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn num_params(&self) -> usize {
        self.n_out * self.n_in + self.n_out
    }

    pub fn init(&self, params: &mut ModelParams, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / (self.n_in as f64).sqrt();
        params.insert(
            self.weight_name(),
            Tensor::uniform(&[self.n_out, self.n_in], bound, rng),
        )?;
        params.insert(self.bias_name(), Tensor::uniform(&[self.n_out], bound, rng))
    }

    pub fn forward(&self, params: &ModelParams, x: &[f64], batch: usize) -> Vec<f64> {
        assert_eq!(x.len(), batch * self.n_in, "{}: input shape", self.name);
        let w = params.expect(&self.weight_name()).data();
        let b = params.expect(&self.bias_name()).data();
        let mut y = Vec::with_capacity(batch * self.n_out);
        for _ in 0..batch {
            y.extend_from_slice(b);
        }
        gemm(
            1.0,
            MatRef::new(x, batch, self.n_in),
            MatRef::new(w, self.n_out, self.n_in).t(),
            1.0,
            MatMut::new(&mut y, batch, self.n_out),
        );
        y
    }

    /// Accumulates parameter gradients and returns `d_x`.
    pub fn backward(
        &self,
        params: &ModelParams,
        grads: &mut ModelParams,
        x: &[f64],
        batch: usize,
        dy: &[f64],
    ) -> Vec<f64> {
        self.accumulate_grads(grads, x, batch, dy);
        self.input_grad(params, batch, dy)
    }

    pub fn accumulate_grads(&self, grads: &mut ModelParams, x: &[f64], batch: usize, dy: &[f64]) {
        assert_eq!(dy.len(), batch * self.n_out);
        {
            let db = grads.expect_mut(&self.bias_name()).data_mut();
            for row in dy.chunks(self.n_out) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
        }
        let dw = grads.expect_mut(&self.weight_name()).data_mut();
        gemm(
            1.0,
            MatRef::new(dy, batch, self.n_out).t(),
            MatRef::new(x, batch, self.n_in),
            1.0,
            MatMut::new(dw, self.n_out, self.n_in),
        );
    }

    pub fn input_grad(&self, params: &ModelParams, batch: usize, dy: &[f64]) -> Vec<f64> {
        let w = params.expect(&self.weight_name()).data();
        let mut dx = vec![0.0; batch * self.n_in];
        gemm(
            1.0,
            MatRef::new(dy, batch, self.n_out),
            MatRef::new(w, self.n_out, self.n_in),
            0.0,
            MatMut::new(&mut dx, batch, self.n_in),
        );
        dx
    }
}
