use crate::error::{IsacError, Result};

use super::mlp::{Gradients, Mlp};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one network.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn for_network(net: &Mlp, config: AdamConfig) -> Self {
        Self::new(net.num_params(), config)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update of a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(IsacError::DimensionMismatch {
                expected: self.first.len(),
                actual: params.len().min(grads.len()),
            });
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }

    /// Applies one update to every parameter of `net`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(IsacError::DimensionMismatch {
                expected: net.layers().len(),
                actual: grads.layers.len(),
            });
        }
        let mut params = Vec::with_capacity(self.first.len());
        let mut flat = Vec::with_capacity(self.first.len());
        for (layer, g) in net.layers().iter().zip(&grads.layers) {
            if layer.weights.dim() != g.weights.dim() || layer.biases.len() != g.biases.len() {
                return Err(IsacError::DimensionMismatch {
                    expected: layer.weights.len() + layer.biases.len(),
                    actual: g.weights.len() + g.biases.len(),
                });
            }
            params.extend(layer.weights.iter().chain(layer.biases.iter()));
            flat.extend(g.weights.iter().chain(g.biases.iter()));
        }
        self.step_flat(&mut params, &flat)?;
        let mut it = params.into_iter();
        for layer in net.layers_mut() {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("parameter count checked");
            }
        }
        Ok(())
    }
}
