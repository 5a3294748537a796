mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal_core::nn::{Linear, ParamStore};
use xmodal_core::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn naive_matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            for p in 0..k {
                out[i * m + j] += a[i * k + p] * b[p * m + j];
            }
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    for _ in 0..50 {
        let (n, k, m) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..6));
        let a = Tensor::<f64>::uniform(vec![n, k], -1.0, 1.0, &mut r);
        let b = Tensor::<f64>::uniform(vec![k, m], -1.0, 1.0, &mut r);
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = tape.matmul(va, vb).unwrap();
        let want = naive_matmul(a.data(), b.data(), n, k, m);
        for (x, y) in tape.value(c).data().iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_matches_brute_force() {
    let mut r = rng(2);
    let mut store = ParamStore::<f64>::new();
    let lin = Linear::new(&mut store, "lin", 5, 3, true, &mut r).unwrap();
    let x = Tensor::<f64>::uniform(vec![4, 5], -1.0, 1.0, &mut r);
    let mut tape = Tape::with_params(&store);
    let v = tape.constant(x.clone());
    let y = lin.forward(&mut tape, v).unwrap();
    let want = common::linear(&store, &lin, &common::to_mat(&x));
    assert!(common::max_abs_diff(&want, tape.value(y)) < 1e-12);
}

#[test]
fn layer_norm_matches_closed_form() {
    let mut r = rng(3);
    let x = Tensor::<f64>::uniform(vec![3, 6], -2.0, 2.0, &mut r);
    let gain = Tensor::<f64>::uniform(vec![6], 0.5, 1.5, &mut r);
    let bias = Tensor::<f64>::uniform(vec![6], -0.5, 0.5, &mut r);
    let mut tape = Tape::new();
    let (vx, vg, vb) = (tape.constant(x.clone()), tape.constant(gain.clone()), tape.constant(bias.clone()));
    let y = tape.layer_norm(vx, vg, vb, 1e-5).unwrap();
    for i in 0..3 {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / 6.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        for j in 0..6 {
            let want = (row[j] - mean) / (var + 1e-5).sqrt() * gain.data()[j] + bias.data()[j];
            assert!((tape.value(y).row(i)[j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn gelu_matches_tanh_form() {
    let xs: Vec<f64> = (-40..=40).map(|i| i as f64 / 8.0).collect();
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::new(vec![xs.len()], xs.clone()).unwrap());
    let y = tape.gelu(v).unwrap();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    for (x, got) in xs.iter().zip(tape.value(y).data()) {
        let want = 0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh());
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut r = rng(4);
    for _ in 0..30 {
        let c = r.random_range(2..8);
        let z: Vec<f64> = (0..c).map(|_| r.random_range(-4.0..4.0)).collect();
        let gold = r.random_range(0..c);
        let w = r.random_range(0.1..3.0);
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::new(vec![c], z.clone()).unwrap().tracked());
        let l = tape.cross_entropy(v, gold, w).unwrap();
        let g = tape.backward(l).unwrap().wrt(v).unwrap();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = z.iter().map(|x| (x - m).exp()).sum();
        for i in 0..c {
            let p = (z[i] - m).exp() / s;
            let want = w * (p - if i == gold { 1.0 } else { 0.0 });
            assert!((g.data()[i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn layer_norm_gradient_matches_finite_difference() {
    let mut r = rng(5);
    let x = Tensor::<f64>::uniform(vec![2, 5], -1.0, 1.0, &mut r);
    let weights: Vec<f64> = (0..10).map(|i| (1.3 * i as f64 + 0.7).sin()).collect();
    let loss = |x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let (g, b) = (tape.constant(Tensor::ones(vec![5])), tape.constant(Tensor::zeros(vec![5])));
        let y = tape.layer_norm(v, g, b, 1e-5).unwrap();
        tape.value(y).data().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone().tracked());
    let (g, b) = (tape.constant(Tensor::ones(vec![5])), tape.constant(Tensor::zeros(vec![5])));
    let y = tape.layer_norm(v, g, b, 1e-5).unwrap();
    let w = tape.constant(Tensor::new(vec![2, 5], weights.clone()).unwrap());
    let p = tape.mul(y, w).unwrap();
    let l = tape.sum(p).unwrap();
    let grad = tape.backward(l).unwrap().wrt(v).unwrap();
    let h = 1e-6;
    for i in 0..10 {
        let (mut plus, mut minus) = (x.clone(), x.clone());
        plus.data_mut()[i] += h;
        minus.data_mut()[i] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        assert!((grad.data()[i] - numeric).abs() < 1e-7, "{i}: {} vs {numeric}", grad.data()[i]);
    }
}

#[test]
fn attention_with_identity_projections_averages_values_for_equal_keys() {
    let mut store = ParamStore::<f64>::new();
    let mha = xmodal_core::nn::MultiHeadAttention::identity(&mut store, "id", 4, 2).unwrap();
    let q = Tensor::<f64>::from_fn(vec![2, 4], |i| i as f64 * 0.1);
    let k = Tensor::<f64>::zeros(vec![3, 4]);
    let v = Tensor::<f64>::from_fn(vec![3, 4], |i| (i / 4) as f64);
    let mut tape = Tape::with_params(&store);
    let (vq, vk, vv) = (tape.constant(q), tape.constant(k), tape.constant(v));
    let out = mha.forward(&mut tape, vq, vk, vv, None).unwrap();
    assert!(tape.value(out).data().iter().all(|x| (x - 1.0).abs() < 1e-12));
}
