//! Adam with bias correction and optional decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<Tensor2>,
    pub second_moment: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor2> = params
            .iter()
            .map(|(_, t)| Tensor2::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Applies one update. `step` advances before the bias correction, so the
    /// first call uses t = 1.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradStore,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for ((id, m), v) in params
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let g = grads.get(id).as_slice();
            let p = params.get_mut(id).as_mut_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                if weight_decay > 0.0 {
                    p[i] -= lr * weight_decay * p[i];
                }
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, super::super::params::ParamId) {
        let mut s = ParamStore::new();
        let id = s.register("x", Tensor2::filled(1, 1, v));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = scalar_store(1.5);
        let mut st = AdamState::new(&s);
        let g = s.zero_grads();
        st.step(&mut s, &g, 0.1, 0.0).unwrap();
        assert_eq!(s.get(id)[(0, 0)], 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g0 in [3.0, -0.02] {
            let (mut s, id) = scalar_store(0.0);
            let mut st = AdamState::new(&s);
            let mut g = s.zero_grads();
            g.get_mut(id)[(0, 0)] = g0;
            st.step(&mut s, &g, 0.01, 0.0).unwrap();
            let moved = s.get(id)[(0, 0)];
            assert!((moved + 0.01 * f64::signum(g0)).abs() < 1e-8, "{moved}");
        }
    }

    #[test]
    fn three_steps_on_quadratic_match_hand_simulation() {
        // f(x) = (x - 2)^2, x0 = 0, lr = 0.1
        let (mut s, id) = scalar_store(0.0);
        let mut st = AdamState::new(&s);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let grad = 2.0 * (x - 2.0);
            m = 0.9 * m + 0.1 * grad;
            v = 0.999 * v + 0.001 * grad * grad;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let mut g = s.zero_grads();
            g.get_mut(id)[(0, 0)] = 2.0 * (s.get(id)[(0, 0)] - 2.0);
            st.step(&mut s, &g, 0.1, 0.0).unwrap();
            assert!((s.get(id)[(0, 0)] - x).abs() < 1e-15);
        }
        // frozen reference trajectory
        assert!((x - 0.299_376_607_953_535).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let (mut s, id) = scalar_store(1.0);
        let mut st = AdamState::new(&s);
        let g = s.zero_grads();
        st.step(&mut s, &g, 0.1, 0.5).unwrap();
        assert!((s.get(id)[(0, 0)] - 0.95).abs() < 1e-15);
    }
}
