//! Multi-head scaled dot-product attention.
//!
//! The same layer serves as cross-attention (query from one sequence, key and
//! value from others) and self-attention (all three the same). There is no
//! positional encoding inside the layer, so jointly permuting key and value
//! rows leaves the output unchanged.

use rand::Rng;

use super::{Linear, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Score added to masked key positions before the softmax.
const MASKED_SCORE: f64 = -1e9;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
    num_heads: usize,
    dim: usize,
}

fn check_heads(dim: usize, num_heads: usize) -> Result<()> {
    if num_heads == 0 || !dim.is_multiple_of(num_heads) {
        return Err(Error::Config(format!(
            "model dim {dim} is not divisible by {num_heads} attention heads"
        )));
    }
    Ok(())
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        num_heads: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Result<Self> {
        check_heads(dim, num_heads)?;
        let mut proj = |p: &str, rng: &mut R| Linear::new(store, &format!("{name}.{p}"), dim, dim, trainable, rng);
        Ok(Self {
            q_proj: proj("q_proj", rng)?,
            k_proj: proj("k_proj", rng)?,
            v_proj: proj("v_proj", rng)?,
            out_proj: proj("out_proj", rng)?,
            num_heads,
            dim,
        })
    }

    /// All four projections set to the identity with zero bias. Used by
    /// oracle tests, where the layer reduces to plain per-head attention.
    pub fn identity<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize, num_heads: usize) -> Result<Self> {
        check_heads(dim, num_heads)?;
        let mut proj =
            |p: &str| Linear::from_tensors(store, &format!("{name}.{p}"), Tensor::eye(dim), Tensor::zeros(vec![dim]), true);
        Ok(Self {
            q_proj: proj("q_proj")?,
            k_proj: proj("k_proj")?,
            v_proj: proj("v_proj")?,
            out_proj: proj("out_proj")?,
            num_heads,
            dim,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.num_heads
    }

    /// `query: [Tq×d]`, `key: [Tk×d]`, `value: [Tk×d]` → `[Tq×d]`.
    ///
    /// `key_mask[j] == true` excludes key/value position `j` from every
    /// query's softmax.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        query: Var,
        key: Var,
        value: Var,
        key_mask: Option<&[bool]>,
    ) -> Result<Var> {
        let (tq, dq) = tape.value(query).dims2()?;
        let (tk, dk) = tape.value(key).dims2()?;
        let (tv, dv) = tape.value(value).dims2()?;
        for (d, v) in [(dq, query), (dk, key), (dv, value)] {
            if d != self.dim {
                return Err(Error::Shape {
                    op: "multi_head_attention",
                    lhs: tape.value(v).shape().to_vec(),
                    rhs: vec![self.dim],
                });
            }
        }
        if tk != tv {
            return Err(Error::SequenceLength { keys: tk, values: tv });
        }
        let mask = match key_mask {
            Some(m) if m.len() != tk => {
                return Err(Error::Shape {
                    op: "attention_mask",
                    lhs: vec![tk],
                    rhs: vec![m.len()],
                })
            }
            Some(m) if m.iter().any(|x| *x) => {
                let bias = Tensor::from_fn(vec![tq, tk], |i| {
                    if m[i % tk] {
                        T::from_f64(MASKED_SCORE)
                    } else {
                        T::ZERO
                    }
                });
                Some(tape.constant(bias))
            }
            _ => None,
        };

        let q = self.q_proj.forward(tape, query)?;
        let k = self.k_proj.forward(tape, key)?;
        let v = self.v_proj.forward(tape, value)?;
        let hd = self.head_dim();
        let scale = T::from_f64(1.0 / (hd as f64).sqrt());

        let mut heads = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = tape.narrow(q, 1, h * hd, hd)?;
            let kh = tape.narrow(k, 1, h * hd, hd)?;
            let vh = tape.narrow(v, 1, h * hd, hd)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let mut scores = tape.scale(scores, scale)?;
            if let Some(mb) = mask {
                scores = tape.add(scores, mb)?;
            }
            let weights = tape.softmax(scores, 1)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat(&heads, 1)?
        };
        self.out_proj.forward(tape, merged)
    }
}
