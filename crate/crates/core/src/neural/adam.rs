use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::layer::{Gradients, Network};
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

/// Adam optimizer state: first/second moment per parameter plus the step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let moments = net
            .layers
            .iter()
            .map(|l| Moments {
                m_w: Array2::zeros(l.weights.raw_dim()),
                v_w: Array2::zeros(l.weights.raw_dim()),
                m_b: Array1::zeros(l.bias.raw_dim()),
                v_b: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter in `net`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NeuralError> {
        if grads.layers.len() != net.layers.len() || self.moments.len() != net.layers.len() {
            return Err(NeuralError::ShapeMismatch {
                context: "adam layer count".into(),
                expected: net.layers.len(),
                found: grads.layers.len(),
            });
        }
        for (i, ((layer, g), m)) in net.layers.iter().zip(&grads.layers).zip(&self.moments).enumerate() {
            if layer.weights.dim() != g.weights.dim() || layer.bias.dim() != g.bias.dim() || m.m_w.dim() != layer.weights.dim() {
                return Err(NeuralError::ShapeMismatch {
                    context: format!("adam gradient for layer {i}"),
                    expected: layer.weights.len(),
                    found: g.weights.len(),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for ((layer, g), mo) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.moments) {
            Zip::from(&mut layer.weights)
                .and(&mut mo.m_w)
                .and(&mut mo.v_w)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut mo.m_b)
                .and(&mut mo.v_b)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
