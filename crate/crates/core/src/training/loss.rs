use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeightMode {
    Uniform,
    InverseFrequency,
}

/// Per-class loss weights.
///
/// `InverseFrequency` gives `w_c = N / (C·n_c)` where `C` counts only
/// classes that occur; absent classes get weight 0.
pub fn class_weights(counts: &[u64], mode: ClassWeightMode) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter("class counts are all zero".into()));
    }
    Ok(match mode {
        ClassWeightMode::Uniform => vec![1.0; counts.len()],
        ClassWeightMode::InverseFrequency => {
            let present = counts.iter().filter(|n| **n > 0).count() as f64;
            counts
                .iter()
                .map(|&n| {
                    if n == 0 {
                        0.0
                    } else {
                        total as f64 / (present * n as f64)
                    }
                })
                .collect()
        }
    })
}

/// `−w[gold] · log softmax(logits)[gold]`.
pub fn weighted_cross_entropy<T: Scalar>(
    tape: &mut Tape<'_, T>,
    logits: Var,
    gold: usize,
    weights: &[T],
) -> Result<Var> {
    let classes = tape.value(logits).numel();
    if weights.len() != classes {
        return Err(Error::Shape {
            op: "weighted_cross_entropy",
            lhs: tape.value(logits).shape().to_vec(),
            rhs: vec![weights.len()],
        });
    }
    if gold >= classes {
        return Err(Error::ClassIndex { index: gold, classes });
    }
    tape.cross_entropy(logits, gold, weights[gold])
}

/// Batch reduction: sum of weighted sample losses over the sum of the gold
/// weights. `losses[i]` must already include its weight.
pub fn weighted_mean_loss(losses: &[f64], golds: &[usize], weights: &[f64]) -> f64 {
    let denom: f64 = golds.iter().map(|g| weights[*g]).sum();
    if denom == 0.0 {
        0.0
    } else {
        losses.iter().sum::<f64>() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn weight_examples() {
        assert_eq!(class_weights(&[3, 0, 9], ClassWeightMode::Uniform).unwrap(), vec![1.0; 3]);
        let w = class_weights(&[5, 3, 2], ClassWeightMode::InverseFrequency).unwrap();
        for (a, b) in w.iter().zip([10.0 / 15.0, 10.0 / 9.0, 10.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(class_weights(&[4, 4, 4], ClassWeightMode::InverseFrequency).unwrap(), vec![1.0; 3]);
        assert_eq!(class_weights(&[4, 0, 4], ClassWeightMode::InverseFrequency).unwrap(), vec![1.0, 0.0, 1.0]);
        assert!(class_weights(&[0, 0], ClassWeightMode::Uniform).is_err());
    }

    #[test]
    fn uniform_zero_logits_is_ln_c() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros(vec![7]).tracked());
        let l = weighted_cross_entropy(&mut tape, z, 2, &[1.0; 7]).unwrap();
        assert!((tape.value(l).data()[0] - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_falls_as_gold_logit_grows() {
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let mut tape = Tape::<f64>::new();
            let mut v = vec![0.0; 4];
            v[1] = k as f64;
            let z = tape.constant(Tensor::new(vec![4], v).unwrap());
            let l = weighted_cross_entropy(&mut tape, z, 1, &[1.0; 4]).unwrap();
            let x = tape.value(l).data()[0];
            assert!(x < prev && x >= 0.0);
            prev = x;
        }
    }

    #[test]
    fn gradient_is_weighted_softmax_minus_onehot() {
        let logits = [0.3, -1.2, 2.0];
        let w = [0.5, 2.0, 1.5];
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::new(vec![3], logits.to_vec()).unwrap().tracked());
        let l = weighted_cross_entropy(&mut tape, z, 1, &w).unwrap();
        let g = tape.backward(l).unwrap().wrt(z).unwrap();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let s: f64 = logits.iter().map(|x| (x - m).exp()).sum();
        for (i, gi) in g.data().iter().enumerate() {
            let p = (logits[i] - m).exp() / s;
            let expect = w[1] * (p - if i == 1 { 1.0 } else { 0.0 });
            assert!((gi - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_gold() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(vec![3]));
        assert!(matches!(
            weighted_cross_entropy(&mut tape, z, 3, &[1.0; 3]),
            Err(Error::ClassIndex { index: 3, classes: 3 })
        ));
    }

    #[test]
    fn weighted_mean_reduction() {
        let w = [2.0, 1.0];
        assert_eq!(weighted_mean_loss(&[2.0 * 0.5, 1.0 * 1.0], &[0, 1], &w), 2.0 / 3.0);
    }
}
