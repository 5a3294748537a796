use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment buffers per parameter, allocated on first use.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Scalar = f32> {
    pub t: u64,
    pub m: Vec<Option<Vec<T>>>,
    pub v: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for OptimizerState<T> {
    fn default() -> Self {
        Self {
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One AdamW update of a single buffer at step `t` (already incremented).
pub fn adamw_update<T: Scalar>(theta: &mut [T], g: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamWConfig) -> Result<()> {
    if g.len() != theta.len() || m.len() != theta.len() || v.len() != theta.len() {
        return Err(Error::Shape {
            op: "adamw_step",
            lhs: vec![theta.len()],
            rhs: vec![g.len(), m.len(), v.len()],
        });
    }
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    let decay = T::from_f64(cfg.lr * cfg.weight_decay);
    for i in 0..theta.len() {
        let gi = g[i];
        m[i] = b1 * m[i] + (T::ONE - b1) * gi;
        v[i] = b2 * v[i] + (T::ONE - b2) * gi * gi;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let old = theta[i];
        theta[i] = old - lr * m_hat / (v_hat.sqrt() + eps) - decay * old;
    }
    Ok(())
}

/// Apply one step to every trainable parameter that has a gradient.
pub fn adamw_step<T: Scalar>(params: &mut ParamStore<T>, state: &mut OptimizerState<T>, cfg: &AdamWConfig) -> Result<()> {
    state.t += 1;
    let n = params.len();
    state.m.resize(n, None);
    state.v.resize(n, None);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let tensor = params.get_mut(id);
        if !tensor.requires_grad() {
            continue;
        }
        let Some(g) = tensor.grad().map(<[T]>::to_vec) else {
            continue;
        };
        let len = tensor.numel();
        let m = state.m[id.index()].get_or_insert_with(|| vec![T::ZERO; len]);
        let v = state.v[id.index()].get_or_insert_with(|| vec![T::ZERO; len]);
        adamw_update(tensor.data_mut(), &g, m, v, state.t, cfg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig {
            lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        }
    }

    fn one_step(theta: f64, g: f64, c: &AdamWConfig) -> f64 {
        let mut th = [theta];
        let (mut m, mut v) = ([0.0], [0.0]);
        adamw_update(&mut th, &[g], &mut m, &mut v, 1, c).unwrap();
        th[0]
    }

    #[test]
    fn first_step_examples() {
        let c = cfg(0.1, 0.0);
        assert!((one_step(1.0, 2.0, &c) - (1.0 - 0.1 * (2.0 / (2.0 + 1e-8)))).abs() < 1e-12);
        assert_eq!(one_step(1.0, 0.0, &c), 1.0);
        assert!((one_step(1.0, 0.0, &cfg(0.1, 0.01)) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn step_skips_frozen_and_gradless() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::ones(vec![2]), true).unwrap();
        let b = store.add("b", Tensor::ones(vec![2]), false).unwrap();
        let c = store.add("c", Tensor::ones(vec![2]), true).unwrap();
        store.get_mut(a).accumulate_grad(&[1.0, -1.0]).unwrap();
        let mut st = OptimizerState::new();
        adamw_step(&mut store, &mut st, &cfg(0.1, 0.5)).unwrap();
        assert_ne!(store.get(a).data(), &[1.0, 1.0]);
        assert_eq!(store.get(b).data(), &[1.0, 1.0]);
        assert_eq!(store.get(c).data(), &[1.0, 1.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn step_decreases_quadratic() {
        // f(θ) = Σ θ², ∇ = 2θ
        let mut theta = vec![0.7, -1.3, 2.1];
        let f = |t: &[f64]| t.iter().map(|x| x * x).sum::<f64>();
        let before = f(&theta);
        let g: Vec<f64> = theta.iter().map(|x| 2.0 * x).collect();
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adamw_update(&mut theta, &g, &mut m, &mut v, 1, &cfg(1e-3, 0.0)).unwrap();
        assert!(f(&theta) < before);
    }

    #[test]
    fn shape_mismatch() {
        let mut th = [0.0; 2];
        assert!(adamw_update(&mut th, &[1.0], &mut [0.0; 2], &mut [0.0; 2], 1, &cfg(0.1, 0.0)).is_err());
    }
}
