//! Feature-wise batch normalization without a learned affine transform.
//!
//! Train mode normalizes with the batch's own mean and (biased) variance;
//! infer mode uses the running statistics accumulated during training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Per-dimension statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// What the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: Mode,
    pub normalized: Vec<Vec<f64>>,
    pub inv_std: Vec<f64>,
}

impl BatchNormState {
    pub fn new(dim: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0,1], got {momentum}")));
        }
        Ok(BatchNormState {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    /// Folds one batch's statistics into the running averages.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = ((1.0 - m) * *r + m * b).max(0.0);
        }
    }

    /// Pure forward pass. Train mode returns the batch statistics for the
    /// caller to fold in with [`BatchNormState::update`].
    pub fn forward(
        &self,
        batch: &[Vec<f64>],
        mode: Mode,
    ) -> Result<(Vec<Vec<f64>>, BatchNormCache, Option<BatchStats>)> {
        let dim = self.dim();
        if let Some(bad) = batch.iter().find(|x| x.len() != dim) {
            return Err(Error::Shape(format!(
                "batch norm over {dim} dims got a vector of length {}",
                bad.len()
            )));
        }
        match mode {
            Mode::Train => {
                let n = batch.len();
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                let nf = n as f64;
                let mut mean = vec![0.0; dim];
                for x in batch {
                    for (m, v) in mean.iter_mut().zip(x) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= nf);
                let mut var = vec![0.0; dim];
                for x in batch {
                    for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= nf);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
                let normalized = normalize(batch, &mean, &inv_std);
                let cache = BatchNormCache {
                    mode,
                    normalized: normalized.clone(),
                    inv_std,
                };
                Ok((normalized, cache, Some(BatchStats { mean, var })))
            }
            Mode::Infer => {
                let inv_std: Vec<f64> = self
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + self.epsilon).sqrt())
                    .collect();
                let normalized = normalize(batch, &self.running_mean, &inv_std);
                let cache = BatchNormCache {
                    mode,
                    normalized: normalized.clone(),
                    inv_std,
                };
                Ok((normalized, cache, None))
            }
        }
    }

    /// Forward pass that also updates running statistics in train mode.
    pub fn batch_norm(&mut self, batch: &[Vec<f64>], mode: Mode) -> Result<Vec<Vec<f64>>> {
        let (out, _, stats) = self.forward(batch, mode)?;
        if let Some(stats) = stats {
            self.update(&stats);
        }
        Ok(out)
    }
}

fn normalize(batch: &[Vec<f64>], mean: &[f64], inv_std: &[f64]) -> Vec<Vec<f64>> {
    batch
        .iter()
        .map(|x| {
            x.iter()
                .zip(mean)
                .zip(inv_std)
                .map(|((v, m), s)| (v - m) * s)
                .collect()
        })
        .collect()
}

/// Gradient with respect to the batch inputs given the gradient at the outputs.
pub fn backward(cache: &BatchNormCache, grad_out: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match cache.mode {
        Mode::Infer => grad_out
            .iter()
            .map(|g| g.iter().zip(&cache.inv_std).map(|(g, s)| g * s).collect())
            .collect(),
        Mode::Train => {
            let n = grad_out.len() as f64;
            let dim = cache.inv_std.len();
            let mut sum_g = vec![0.0; dim];
            let mut sum_gx = vec![0.0; dim];
            for (g, xh) in grad_out.iter().zip(&cache.normalized) {
                for d in 0..dim {
                    sum_g[d] += g[d];
                    sum_gx[d] += g[d] * xh[d];
                }
            }
            grad_out
                .iter()
                .zip(&cache.normalized)
                .map(|(g, xh)| {
                    (0..dim)
                        .map(|d| cache.inv_std[d] / n * (n * g[d] - sum_g[d] - xh[d] * sum_gx[d]))
                        .collect()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(dim: usize) -> BatchNormState {
        BatchNormState::new(dim, 0.1, 1e-5).unwrap()
    }

    #[test]
    fn identical_vectors_normalize_to_zero() {
        let mut s = state(3);
        let batch = vec![vec![2.0, -1.0, 5.0]; 4];
        let out = s.batch_norm(&batch, Mode::Train).unwrap();
        for row in out {
            for v in row {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plus_minus_one_is_preserved_up_to_epsilon() {
        let mut s = state(2);
        let out = s
            .batch_norm(&[vec![-1.0, -1.0], vec![1.0, 1.0]], Mode::Train)
            .unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0][0] + expected).abs() < 1e-12);
        assert!((out[1][1] - expected).abs() < 1e-12);
        // running stats moved toward (mean 0, var 1)
        assert_eq!(s.running_mean, vec![0.0, 0.0]);
        assert!((s.running_var[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infer_with_identity_stats_is_identity() {
        let mut s = state(3);
        let before = s.clone();
        let x = vec![vec![0.3, -2.0, 7.0]];
        let out = s.batch_norm(&x, Mode::Infer).unwrap();
        for (a, b) in out[0].iter().zip(&x[0]) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
        assert_eq!(s, before);
    }

    #[test]
    fn train_mode_rejects_single_vector() {
        let mut s = state(2);
        assert!(matches!(
            s.batch_norm(&[vec![1.0, 2.0]], Mode::Train),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(BatchNormState::new(2, 0.1, 0.0).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        let batch = vec![
            vec![0.3, -1.2],
            vec![1.5, 0.7],
            vec![-0.4, 2.2],
            vec![0.9, -0.1],
        ];
        let weights = [[0.7, -1.3], [0.2, 0.5], [-0.9, 1.1], [1.4, 0.3]];
        let s = state(2);
        let loss = |b: &[Vec<f64>]| -> f64 {
            let (out, _, _) = s.forward(b, Mode::Train).unwrap();
            out.iter()
                .zip(&weights)
                .map(|(o, w)| o[0] * w[0] + o[1] * w[1] + 0.5 * o[0] * o[1])
                .sum()
        };
        let (out, cache, _) = s.forward(&batch, Mode::Train).unwrap();
        let grad_out: Vec<Vec<f64>> = out
            .iter()
            .zip(&weights)
            .map(|(o, w)| vec![w[0] + 0.5 * o[1], w[1] + 0.5 * o[0]])
            .collect();
        let analytic = backward(&cache, &grad_out);
        let eps = 1e-6;
        for i in 0..batch.len() {
            for d in 0..2 {
                let mut plus = batch.clone();
                plus[i][d] += eps;
                let mut minus = batch.clone();
                minus[i][d] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!((numeric - analytic[i][d]).abs() < 1e-6, "{i},{d}");
            }
        }
    }

    proptest! {
        #[test]
        fn train_output_is_standardized(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 8..20)
        ) {
            // keep away from degenerate near-constant columns
            let spread_ok = (0..3).all(|d| {
                let (lo, hi) = rows.iter().fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r[d]), hi.max(r[d])));
                hi - lo > 0.5
            });
            prop_assume!(spread_ok);
            let mut s = state(3);
            let out = s.batch_norm(&rows, Mode::Train).unwrap();
            let n = out.len() as f64;
            for d in 0..3 {
                let mean: f64 = out.iter().map(|r| r[d]).sum::<f64>() / n;
                let var: f64 = out.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-6);
                prop_assert!((var - 1.0).abs() < 1e-3);
            }
            prop_assert!(s.running_var.iter().all(|v| *v >= 0.0));
        }
    }
}
