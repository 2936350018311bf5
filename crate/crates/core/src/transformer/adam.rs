use serde::{Deserialize, Serialize};

use super::{ModelDims, SuperNetwork, Weights};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Weights,
    pub v: Weights,
}

impl AdamState {
    pub fn new(dims: &ModelDims) -> Self {
        AdamState {
            step: 0,
            m: Weights::zeros(dims),
            v: Weights::zeros(dims),
        }
    }
}

impl Adam {
    /// Applies one Adam update.
    ///
    /// Entries whose gradient is exactly zero are skipped: neither their
    /// moments nor their value change. Parameters of heads and neurons that
    /// were masked in every sub-network of a step therefore stay frozen.
    pub fn step(&self, net: &mut SuperNetwork, grads: &Weights, state: &mut AdamState) -> Result<()> {
        grads.check_shapes(&net.dims)?;
        if !grads.is_finite() {
            return Err(Error::Numeric {
                context: format!("non-finite gradient at optimizer step {}", state.step + 1),
            });
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let params = net.weights.tensors_mut();
        let ms = state.m.tensors_mut();
        let vs = state.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
        if !net.weights.is_finite() {
            return Err(Error::Numeric {
                context: format!("non-finite weights after optimizer step {}", state.step),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ModelDims {
        ModelDims {
            layers: 1,
            heads: 1,
            units: 2,
            d_model: 2,
            d_head: 2,
            vocab: 3,
            max_len: 2,
            classes: 2,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let d = dims();
        let mut net = SuperNetwork::random(d, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&d);
        Adam::default().step(&mut net, &Weights::zeros(&d), &mut state).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // Step 1: m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g²,
        // so p ← p − lr · g / (|g| + eps).
        let d = dims();
        let mut net = SuperNetwork::random(d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        net.weights.cls_b = vec![0.5, -0.25];
        let mut g = Weights::zeros(&d);
        g.cls_b = vec![0.2, -3.0];
        let adam = Adam {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut state = AdamState::new(&d);
        adam.step(&mut net, &g, &mut state).unwrap();
        let e0 = 0.5 - 0.01 * 0.2 / (0.2 + 1e-8);
        let e1 = -0.25 + 0.01 * 3.0 / (3.0 + 1e-8);
        assert!((net.weights.cls_b[0] - e0).abs() < 1e-15);
        assert!((net.weights.cls_b[1] - e1).abs() < 1e-15);
        assert!((state.m.cls_b[0] - 0.02).abs() < 1e-15);
        assert!((state.v.cls_b[1] - 0.009).abs() < 1e-15);

        // Step 2 with the same gradient, by hand.
        adam.step(&mut net, &g, &mut state).unwrap();
        let g0: f64 = 0.2;
        let m2 = 0.9 * 0.1 * g0 + 0.1 * g0;
        let v2 = 0.999 * 0.001 * g0 * g0 + 0.001 * g0 * g0;
        let mhat = m2 / (1.0 - 0.81);
        let vhat = v2 / (1.0 - 0.999f64.powi(2));
        let e0b = e0 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
        assert!((net.weights.cls_b[0] - e0b).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let d = dims();
        let mut net = SuperNetwork::random(d, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut g = Weights::zeros(&d);
        g.tok_emb[0] = f64::INFINITY;
        let r = Adam::default().step(&mut net, &g, &mut AdamState::new(&d));
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }
}
