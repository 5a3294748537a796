use rand::Rng;

use super::{Linear, MultiHeadAttention, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

/// Pre-norm transformer encoder block:
/// `h = x + SelfAttn(LN₁(x))`, `out = h + FFN(LN₂(h))` with a 4·d GELU
/// feed-forward hidden layer.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ln1: (ParamId, ParamId),
    pub ln2: (ParamId, ParamId),
    dim: usize,
}

impl EncoderBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        num_heads: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let norm = |store: &mut ParamStore<T>, p: &str| -> Result<(ParamId, ParamId)> {
            Ok((
                store.add(format!("{name}.{p}.gain"), Tensor::ones(vec![dim]), trainable)?,
                store.add(format!("{name}.{p}.bias"), Tensor::zeros(vec![dim]), trainable)?,
            ))
        };
        let ln1 = norm(store, "ln1")?;
        let attn = MultiHeadAttention::new(store, &format!("{name}.attn"), dim, num_heads, trainable, rng)?;
        let ln2 = norm(store, "ln2")?;
        let ff_in = Linear::new(store, &format!("{name}.ff_in"), dim, 4 * dim, trainable, rng)?;
        let ff_out = Linear::new(store, &format!("{name}.ff_out"), 4 * dim, dim, trainable, rng)?;
        Ok(Self {
            attn,
            ff_in,
            ff_out,
            ln1,
            ln2,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let (_, d) = tape.value(x).dims2()?;
        if d != self.dim {
            return Err(Error::Shape {
                op: "encoder_block",
                lhs: tape.value(x).shape().to_vec(),
                rhs: vec![self.dim],
            });
        }
        let (g1, b1) = (tape.param(self.ln1.0)?, tape.param(self.ln1.1)?);
        let n1 = tape.layer_norm(x, g1, b1, LN_EPS)?;
        let a = self.attn.forward(tape, n1, n1, n1, None)?;
        let h = tape.add(x, a)?;

        let (g2, b2) = (tape.param(self.ln2.0)?, tape.param(self.ln2.1)?);
        let n2 = tape.layer_norm(h, g2, b2, LN_EPS)?;
        let f = self.ff_in.forward(tape, n2)?;
        let f = tape.gelu(f)?;
        let f = self.ff_out.forward(tape, f)?;
        tape.add(h, f)
    }
}
