//! Explicit-loop reference implementations shared by integration tests.

#![allow(dead_code)]

use xmodal_core::nn::{Linear, MultiHeadAttention, ParamStore};
use xmodal_core::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor<f64>) -> Mat {
    let (r, c) = t.dims2().unwrap();
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

pub fn linear(store: &ParamStore<f64>, lin: &Linear, x: &Mat) -> Mat {
    let w = store.get(lin.weight);
    let b = store.get(lin.bias);
    let (n_in, n_out) = w.dims2().unwrap();
    x.iter()
        .map(|row| {
            (0..n_out)
                .map(|o| {
                    let mut acc = b.data()[o];
                    for i in 0..n_in {
                        acc += row[i] * w.data()[i * n_out + o];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Multi-head attention computed one head, one query and one key at a time.
/// Masked keys are skipped outright.
pub fn attention(
    store: &ParamStore<f64>,
    mha: &MultiHeadAttention,
    query: &Mat,
    key: &Mat,
    value: &Mat,
    mask: Option<&[bool]>,
) -> Mat {
    let q = linear(store, &mha.q_proj, query);
    let k = linear(store, &mha.k_proj, key);
    let v = linear(store, &mha.v_proj, value);
    let d = mha.dim();
    let heads = mha.num_heads();
    let hd = d / heads;
    let mut merged = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let lo = h * hd;
        for (i, qi) in q.iter().enumerate() {
            let mut scores = Vec::new();
            for (j, kj) in k.iter().enumerate() {
                if mask.is_some_and(|m| m[j]) {
                    continue;
                }
                let mut s = 0.0;
                for c in lo..lo + hd {
                    s += qi[c] * kj[c];
                }
                scores.push((j, s / (hd as f64).sqrt()));
            }
            let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = scores.iter().map(|(_, s)| (s - max).exp()).sum();
            for (j, s) in &scores {
                let a = (s - max).exp() / denom;
                for c in lo..lo + hd {
                    merged[i][c] += a * v[*j][c];
                }
            }
        }
    }
    linear(store, &mha.out_proj, &merged)
}

pub fn max_abs_diff(a: &Mat, b: &Tensor<f64>) -> f64 {
    let b = to_mat(b);
    assert_eq!(a.len(), b.len());
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
