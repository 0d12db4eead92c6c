use crate::error::{Error, Result};
use crate::nn::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for the parameters it was created from.
///
/// The state may cover a subset of a larger parameter map; [`step`](Self::step)
/// only touches the names it tracks.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: ModelParams,
    v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn first_moment(&self) -> &ModelParams {
        &self.m
    }

    pub fn second_moment(&self) -> &ModelParams {
        &self.v
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        for (name, _) in self.m.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::shape(format!("no gradient for {name:?}")))?;
            if !g.is_finite() {
                return Err(Error::TrainingDiverged(format!("non-finite gradient in {name:?}")));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((name, m), (_, v)) in self.m.iter_mut().zip(self.v.iter_mut()) {
            let g = grads.expect(name).data();
            let p = params.expect_mut(name).data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One Adam step on `params` with gradients `grads`.
pub fn adam_update(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}
