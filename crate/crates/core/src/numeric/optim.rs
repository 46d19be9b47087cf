use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Gradients, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub method: Method,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled shrinkage applied to every updated entry, scaled by the
    /// learning rate.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            method: Method::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            method: Method::Sgd,
            ..Default::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Optimizer with per-parameter moment buffers (Adam) or none (SGD).
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            steps: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. Every gradient must name a trainable parameter of
    /// matching length; frozen entries are never written.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients) -> Result<()> {
        for (name, g) in grads.iter() {
            let p = params
                .get(name)
                .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
            if !p.trainable {
                return Err(Error::FrozenParameter(name.to_string()));
            }
            if p.tensor.len() != g.len() {
                return Err(Error::Shape(format!(
                    "gradient for `{name}` has {} values, parameter has {}",
                    g.len(),
                    p.tensor.len()
                )));
            }
        }
        grads.check_finite()?;
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        for (name, g) in grads.iter() {
            let values = params
                .get_mut(name)
                .expect("checked above")
                .tensor
                .data_mut();
            if c.weight_decay > 0.0 {
                let shrink = 1.0 - c.learning_rate * c.weight_decay;
                values.iter_mut().for_each(|v| *v *= shrink);
            }
            match c.method {
                Method::Sgd => {
                    for (v, gi) in values.iter_mut().zip(g) {
                        *v -= c.learning_rate * gi;
                    }
                }
                Method::Adam => {
                    let m = self
                        .first
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; g.len()]);
                    let s = self
                        .second
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; g.len()]);
                    let bc1 = 1.0 - c.beta1.powi(t);
                    let bc2 = 1.0 - c.beta2.powi(t);
                    for i in 0..g.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        s[i] = c.beta2 * s[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let s_hat = s[i] / bc2;
                        values[i] -= c.learning_rate * m_hat / (s_hat.sqrt() + c.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn single(name: &str, value: f64, trainable: bool) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert(name, Tensor::vector(vec![value]).unwrap(), trainable).unwrap();
        p
    }

    #[test]
    fn sgd_step_on_half_square() {
        // f = x^2/2, f'(1) = 1
        let mut p = single("x", 1.0, true);
        let mut g = Gradients::new();
        g.insert("x", vec![1.0]);
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut p, &g).unwrap();
        assert!((p.data("x").unwrap()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for config in [OptimizerConfig::sgd(0.5), OptimizerConfig::adam(0.5)] {
            let mut p = single("x", 0.25, true);
            let mut g = Gradients::new();
            g.insert("x", vec![0.0]);
            Optimizer::new(config).step(&mut p, &g).unwrap();
            assert_eq!(p.data("x").unwrap()[0], 0.25);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 after bias correction, so |dx| = lr * |g| / (|g| + eps)
        let lr = 1e-3;
        let mut p = single("x", 0.0, true);
        let mut g = Gradients::new();
        g.insert("x", vec![1.0]);
        Optimizer::new(OptimizerConfig::adam(lr)).step(&mut p, &g).unwrap();
        let moved = -p.data("x").unwrap()[0];
        assert!((moved - lr / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn frozen_and_unknown_names_are_rejected() {
        let mut p = single("w", 1.0, false);
        let mut g = Gradients::new();
        g.insert("w", vec![1.0]);
        let mut opt = Optimizer::new(OptimizerConfig::default());
        assert!(matches!(opt.step(&mut p, &g), Err(Error::FrozenParameter(_))));
        let mut g = Gradients::new();
        g.insert("nope", vec![1.0]);
        assert!(matches!(opt.step(&mut p, &g), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn frozen_entries_survive_many_steps() {
        let mut p = ParameterSet::new();
        p.insert("a", Tensor::vector(vec![0.5, -0.25]).unwrap(), true).unwrap();
        p.insert("frozen", Tensor::vector(vec![1.0 / 3.0, 7.0]).unwrap(), false).unwrap();
        let before = p.get("frozen").unwrap().tensor.clone();
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-2));
        for i in 0..1000 {
            let mut g = Gradients::new();
            g.insert("a", vec![(i as f64).sin(), 1.0]);
            opt.step(&mut p, &g).unwrap();
        }
        let after = &p.get("frozen").unwrap().tensor;
        let bytes = |t: &Tensor| t.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&before), bytes(after));
    }
}
