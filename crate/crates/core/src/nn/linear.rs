use rand::Rng;

use super::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Affine map `x·W + b` with `W: [in×out]`, `b: [out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = (6.0 / (in_dim + out_dim).max(1) as f64).sqrt();
        let w = Tensor::uniform(vec![in_dim, out_dim], -limit, limit, rng);
        Self::from_tensors(store, name, w, Tensor::zeros(vec![out_dim]), trainable)
    }

    pub fn from_tensors<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        weight: Tensor<T>,
        bias: Tensor<T>,
        trainable: bool,
    ) -> Result<Self> {
        let (in_dim, out_dim) = weight.dims2()?;
        if bias.shape() != [out_dim] {
            return Err(Error::Shape {
                op: "linear",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight: store.add(format!("{name}.weight"), weight, trainable)?,
            bias: store.add(format!("{name}.bias"), bias, trainable)?,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Applies the layer to the last axis of `x`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.last() != Some(&self.in_dim) {
            return Err(Error::Shape {
                op: "linear",
                lhs: shape,
                rhs: vec![self.in_dim, self.out_dim],
            });
        }
        let rows = shape[..shape.len() - 1].iter().product();
        let x2 = if shape.len() == 2 {
            x
        } else {
            tape.reshape(x, vec![rows, self.in_dim])?
        };
        let w = tape.param(self.weight)?;
        let b = tape.param(self.bias)?;
        let y = tape.matmul(x2, w)?;
        let y = tape.add_bias(y, b)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut out_shape = shape;
            *out_shape.last_mut().unwrap() = self.out_dim;
            tape.reshape(y, out_shape)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Seed, Stream};

    #[test]
    fn identity_weights_pass_through() {
        let mut store = ParamStore::<f64>::new();
        let lin = Linear::from_tensors(&mut store, "l", Tensor::eye(3), Tensor::zeros(vec![3]), true).unwrap();
        let mut tape = Tape::with_params(&store);
        let x = tape.leaf(Tensor::from_fn(vec![2, 3], |i| i as f64 - 2.5));
        let y = lin.forward(&mut tape, x).unwrap();
        assert!(tape.value(y).bit_eq(tape.value(x)));
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Seed(3).stream(Stream::Init);
        let lin = Linear::new(&mut store, "l", 4, 2, true, &mut rng).unwrap();
        store.get_mut(lin.bias).data_mut().copy_from_slice(&[0.5, -1.5]);
        let mut tape = Tape::with_params(&store);
        let x = tape.leaf(Tensor::zeros(vec![3, 4]));
        let y = lin.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -1.5, 0.5, -1.5, 0.5, -1.5]);

        let v = tape.leaf(Tensor::zeros(vec![4]));
        let y = lin.forward(&mut tape, v).unwrap();
        assert_eq!(tape.value(y).shape(), &[2]);
        assert_eq!(tape.value(y).data(), &[0.5, -1.5]);
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Seed(3).stream(Stream::Init);
        let lin = Linear::new(&mut store, "l", 4, 2, true, &mut rng).unwrap();
        let mut tape = Tape::with_params(&store);
        let x = tape.leaf(Tensor::zeros(vec![3, 5]));
        assert!(matches!(lin.forward(&mut tape, x), Err(Error::Shape { .. })));
    }

    #[test]
    fn glorot_bounds() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Seed(9).stream(Stream::Init);
        let lin = Linear::new(&mut store, "l", 10, 6, true, &mut rng).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(store.get(lin.weight).data().iter().all(|w| w.abs() <= limit));
        assert!(store.get(lin.bias).data().iter().all(|b| *b == 0.0));
    }
}
