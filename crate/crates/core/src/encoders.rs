//! Unimodal feature providers.
//!
//! `FileBacked` passes stored hidden-state sequences through unchanged.
//! `ToyTransformer` projects raw features to the model dimension and runs a
//! small stack of encoder blocks; it has no positional encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EncoderBlock, Linear, ParamStore};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    FileBacked,
    ToyTransformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Raw feature width for `ToyTransformer`; `None` means the model dim.
    pub input_dim: Option<usize>,
    pub depth: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::FileBacked,
            input_dim: None,
            depth: 2,
        }
    }
}

impl EncoderConfig {
    pub fn toy(depth: usize) -> Self {
        Self {
            kind: EncoderKind::ToyTransformer,
            input_dim: None,
            depth,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBackend {
    kind: EncoderKind,
    modality: &'static str,
    input_dim: usize,
    dim: usize,
    max_seq_len: usize,
    input: Option<Linear>,
    blocks: Vec<EncoderBlock>,
}

impl EncoderBackend {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        modality: &'static str,
        cfg: &EncoderConfig,
        dim: usize,
        num_heads: usize,
        max_seq_len: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let input_dim = cfg.input_dim.unwrap_or(dim);
        let (input, blocks) = match cfg.kind {
            EncoderKind::FileBacked => {
                if input_dim != dim {
                    return Err(Error::Config(format!(
                        "{modality} encoder: file-backed features must have the model dim {dim}, configured {input_dim}"
                    )));
                }
                (None, Vec::new())
            }
            EncoderKind::ToyTransformer => {
                let name = format!("{modality}_encoder");
                let input = Linear::new(store, &format!("{name}.input"), input_dim, dim, trainable, rng)?;
                let blocks = (0..cfg.depth)
                    .map(|i| EncoderBlock::new(store, &format!("{name}.blocks.{i}"), dim, num_heads, trainable, rng))
                    .collect::<Result<Vec<_>>>()?;
                (Some(input), blocks)
            }
        };
        Ok(Self {
            kind: cfg.kind,
            modality,
            input_dim,
            dim,
            max_seq_len,
            input,
            blocks,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_seq_len(&self) -> usize {
        self.max_seq_len
    }

    pub fn input_layer(&self) -> Option<&Linear> {
        self.input.as_ref()
    }

    pub fn blocks(&self) -> &[EncoderBlock] {
        &self.blocks
    }

    /// `features: [T×input_dim]` → `[T×d]`.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<'_, T>, features: &Tensor<T>) -> Result<Var> {
        let (len, width) = features.dims2()?;
        if len == 0 {
            return Err(Error::MissingModality(self.modality));
        }
        if width != self.input_dim {
            return Err(Error::Shape {
                op: "encode",
                lhs: features.shape().to_vec(),
                rhs: vec![self.input_dim],
            });
        }
        if len > self.max_seq_len {
            return Err(Error::LengthOverflow {
                len,
                target: self.max_seq_len,
            });
        }
        let x = tape.constant(features.clone());
        let Some(input) = &self.input else {
            return Ok(x);
        };
        let mut h = input.forward(tape, x)?;
        for block in &self.blocks {
            h = block.forward(tape, h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Seed, Stream};

    fn backend(cfg: &EncoderConfig, store: &mut ParamStore<f64>) -> EncoderBackend {
        let mut rng = Seed(3).stream(Stream::Init);
        EncoderBackend::new(store, "text", cfg, 4, 2, 6, true, &mut rng).unwrap()
    }

    #[test]
    fn file_backed_is_pass_through() {
        let mut store = ParamStore::new();
        let enc = backend(&EncoderConfig::default(), &mut store);
        assert!(store.is_empty());
        let x = Tensor::<f64>::from_fn(vec![5, 4], |i| (i as f64).sin());
        let mut tape = Tape::with_params(&store);
        let v = enc.encode(&mut tape, &x).unwrap();
        assert!(tape.value(v).bit_eq(&x));
        assert!(!tape.requires_grad(v));
    }

    #[test]
    fn toy_depth_zero_is_affine() {
        let mut store = ParamStore::new();
        let enc = backend(&EncoderConfig::toy(0), &mut store);
        let lin = enc.input_layer().unwrap().clone();
        let x = Tensor::<f64>::from_fn(vec![3, 4], |i| i as f64 * 0.1 - 0.5);
        let mut tape = Tape::with_params(&store);
        let v = enc.encode(&mut tape, &x).unwrap();
        let mut tape2 = Tape::with_params(&store);
        let x2 = tape2.constant(x.clone());
        let expect = lin.forward(&mut tape2, x2).unwrap();
        assert!(tape.value(v).bit_eq(tape2.value(expect)));
    }

    #[test]
    fn rejects_missing_long_and_wrong_dim() {
        let mut store = ParamStore::new();
        let enc = backend(&EncoderConfig::toy(1), &mut store);
        let mut tape = Tape::with_params(&store);
        assert!(matches!(
            enc.encode(&mut tape, &Tensor::<f64>::zeros(vec![0, 4])),
            Err(Error::MissingModality("text"))
        ));
        assert!(matches!(
            enc.encode(&mut tape, &Tensor::<f64>::zeros(vec![2, 5])),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            enc.encode(&mut tape, &Tensor::<f64>::zeros(vec![7, 4])),
            Err(Error::LengthOverflow { len: 7, target: 6 })
        ));
    }

    #[test]
    fn toy_output_has_model_dim() {
        let mut store = ParamStore::new();
        let mut rng = Seed(1).stream(Stream::Init);
        let cfg = EncoderConfig {
            input_dim: Some(3),
            ..EncoderConfig::toy(2)
        };
        let enc = EncoderBackend::new(&mut store, "audio", &cfg, 4, 2, 6, true, &mut rng).unwrap();
        let mut tape = Tape::with_params(&store);
        let v = enc.encode(&mut tape, &Tensor::<f64>::ones(vec![5, 3])).unwrap();
        assert_eq!(tape.value(v).shape(), &[5, 4]);
        assert!(tape.requires_grad(v));
    }
}
