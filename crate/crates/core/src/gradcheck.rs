//! Finite-difference verification of every differentiable component.
//!
//! Each check builds a scalar loss in 64-bit precision, differentiates it on
//! the tape and compares every input and parameter gradient with the
//! fourth-order central difference
//! `(8(L(θ+h) − L(θ−h)) − (L(θ+2h) − L(θ−2h))) / 12h`.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::data::EmotionLabel;
use crate::encoders::{EncoderBackend, EncoderConfig};
use crate::error::Result;
use crate::fusion::{BimodalClassifier, FusionKind, ModelConfig};
use crate::nn::{EncoderBlock, Linear, MultiHeadAttention, ParamStore};
use crate::rng::{Seed, Stream};
use crate::tensor::{Tape, Tensor, Var};

pub const LAYER_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-4;
/// Lower bound on the denominator of the relative error, so gradients that
/// are zero up to rounding compare as absolute differences.
pub const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub components: Vec<ComponentCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(ComponentCheck::passed)
    }

    pub fn failures(&self) -> Vec<&ComponentCheck> {
        self.components.iter().filter(|c| !c.passed()).collect()
    }

    pub fn worst(&self) -> Option<&ComponentCheck> {
        self.components
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn to_text(&self) -> String {
        let w = self.components.iter().map(|c| c.name.len()).max().unwrap_or(9).max(9);
        let mut out = format!("{:<w$}  {:>12}  {:>9}  verdict\n", "component", "max rel err", "tolerance");
        for c in &self.components {
            let _ = writeln!(
                out,
                "{:<w$}  {:>12.3e}  {:>9.0e}  {}",
                c.name,
                c.max_rel_error,
                c.tolerance,
                if c.passed() { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
    (analytic - numeric).abs() / denom
}

/// Derivative at 0 of `f(offset)`.
pub fn central_difference(mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (p1, m1) = (f(STEP)?, f(-STEP)?);
    let (p2, m2) = (f(2.0 * STEP)?, f(-2.0 * STEP)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * STEP))
}

/// Largest relative error over all elements of `inputs` and all trainable
/// parameters in `store` that the loss touches.
pub fn max_relative_error<F>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], loss: F) -> Result<f64>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::with_params(store);
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let l = loss(&mut tape, &vars)?;
        Ok(tape.value(l).data()[0])
    };

    let mut tape = Tape::with_params(store);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().tracked())).collect();
    let l = loss(&mut tape, &vars)?;
    let grads = tape.backward(l)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).map(Tensor::into_data).unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for i in 0..inputs[k].numel() {
            let orig = work[k].data()[i];
            let numeric = central_difference(|x| {
                work[k].data_mut()[i] = orig + x;
                eval(store, &work)
            })?;
            work[k].data_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }

    let mut params = store.clone();
    for id in store.ids() {
        if !store.get(id).requires_grad() {
            continue;
        }
        let n = store.get(id).numel();
        let analytic = grads.param(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for i in 0..n {
            let orig = params.get(id).data()[i];
            let numeric = central_difference(|x| {
                params.get_mut(id).data_mut()[i] = orig + x;
                eval(&params, inputs)
            })?;
            params.get_mut(id).data_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}

/// `Σ out ⊙ R` for a fixed non-constant `R`, turning any output into a
/// scalar whose gradient exercises every output element.
pub fn probe(tape: &mut Tape<'_, f64>, out: Var) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let r = Tensor::from_fn(shape, |i| (1.3 * i as f64 + 0.7).sin());
    let r = tape.constant(r);
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

fn randn(shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, rng)
}

/// Tiny configuration used for the full-model checks.
pub fn tiny_model_config(fusion: FusionKind) -> ModelConfig {
    ModelConfig {
        dim: 8,
        num_heads: 2,
        num_classes: EmotionLabel::COUNT,
        dropout: 0.1,
        fusion,
        text_len: 3,
        audio_len: 5,
        text_encoder: EncoderConfig::toy(1),
        audio_encoder: EncoderConfig::toy(1),
        ..ModelConfig::default()
    }
}

pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    run_gradcheck_with(seed, false)
}

/// Run the full suite. With `include_corrupted` an extra operation with a
/// deliberately wrong backward rule is checked too; it must fail.
pub fn run_gradcheck_with(seed: u64, include_corrupted: bool) -> Result<GradcheckReport> {
    let mut rng = Seed(seed).stream(Stream::Check);
    let mut report = GradcheckReport {
        seed,
        components: Vec::new(),
    };
    let empty = ParamStore::<f64>::new();
    let mut add = |name: &str, tol: f64, err: f64| {
        report.components.push(ComponentCheck {
            name: name.to_string(),
            max_rel_error: err,
            tolerance: tol,
        })
    };
    let l = LAYER_TOLERANCE;

    let ins = [randn(&[3, 4], &mut rng), randn(&[4, 2], &mut rng)];
    add("matmul", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        probe(t, y)
    })?);

    let ins = [randn(&[3, 4], &mut rng)];
    add("transpose", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.transpose(v[0])?;
        probe(t, y)
    })?);

    let ins = [randn(&[3, 4], &mut rng), randn(&[3, 4], &mut rng)];
    add("add", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.add(v[0], v[1])?;
        probe(t, y)
    })?);
    add("mul", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.mul(v[0], v[1])?;
        probe(t, y)
    })?);

    let ins = [randn(&[3, 4], &mut rng), randn(&[4], &mut rng)];
    add("add_bias", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        probe(t, y)
    })?);

    let ins = [randn(&[3, 4], &mut rng)];
    add("scale", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.scale(v[0], 0.7)?;
        probe(t, y)
    })?);
    add("softmax", l, max_relative_error(&empty, &ins, |t, v| {
        let a = t.softmax(v[0], 1)?;
        let b = t.softmax(v[0], 0)?;
        let y = t.add(a, b)?;
        probe(t, y)
    })?);
    add("narrow", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.narrow(v[0], 1, 1, 2)?;
        probe(t, y)
    })?);
    add("reshape", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.reshape(v[0], vec![2, 6])?;
        let f = t.flatten(y)?;
        probe(t, f)
    })?);
    add("sum", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.mul(v[0], v[0])?;
        t.sum(y)
    })?);
    add("gelu", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.gelu(v[0])?;
        probe(t, y)
    })?);
    let drop_seed: u64 = rng.random();
    add("dropout", l, max_relative_error(&empty, &ins, |t, v| {
        let mut r = Seed(drop_seed).stream(Stream::Dropout);
        let y = t.dropout(v[0], 0.3, true, &mut r)?;
        probe(t, y)
    })?);

    let ins = [randn(&[2, 3], &mut rng), randn(&[4, 3], &mut rng)];
    add("pad_to_length", l, max_relative_error(&empty, &ins, |t, v| {
        let a = t.pad_to_length(v[0], 5, false)?;
        let b = t.pad_to_length(v[1], 2, true)?;
        let a = t.narrow(a, 0, 0, 2)?;
        let y = t.add(a, b)?;
        probe(t, y)
    })?);
    add("concat", l, max_relative_error(&empty, &ins, |t, v| {
        let rows = t.concat(&[v[0], v[1]], 0)?;
        let a = t.narrow(rows, 0, 0, 2)?;
        let cols = t.concat(&[a, v[0]], 1)?;
        let p = probe(t, rows)?;
        let q = probe(t, cols)?;
        t.add(p, q)
    })?);

    let ins = [randn(&[3, 5], &mut rng), randn(&[5], &mut rng), randn(&[5], &mut rng)];
    add("layer_norm", l, max_relative_error(&empty, &ins, |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
        probe(t, y)
    })?);

    let ins = [randn(&[7], &mut rng)];
    add("cross_entropy", l, max_relative_error(&empty, &ins, |t, v| t.cross_entropy(v[0], 2, 1.7))?);

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 3, true, &mut rng)?;
    randomize(&mut store, &mut rng);
    let ins = [randn(&[2, 4], &mut rng)];
    add("linear", l, max_relative_error(&store, &ins, |t, v| {
        let y = lin.forward(t, v[0])?;
        probe(t, y)
    })?);

    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 8, 2, true, &mut rng)?;
    randomize(&mut store, &mut rng);
    let ins = [randn(&[3, 8], &mut rng), randn(&[4, 8], &mut rng), randn(&[4, 8], &mut rng)];
    add("multi_head_attention", l, max_relative_error(&store, &ins, |t, v| {
        let y = mha.forward(t, v[0], v[1], v[2], None)?;
        probe(t, y)
    })?);
    add("multi_head_attention_masked", l, max_relative_error(&store, &ins, |t, v| {
        let y = mha.forward(t, v[0], v[1], v[2], Some(&[false, false, true, false]))?;
        probe(t, y)
    })?);

    let mut store = ParamStore::new();
    let block = EncoderBlock::new(&mut store, "block", 8, 2, true, &mut rng)?;
    randomize(&mut store, &mut rng);
    let ins = [randn(&[3, 8], &mut rng)];
    add("encoder_block", l, max_relative_error(&store, &ins, |t, v| {
        let y = block.forward(t, v[0])?;
        probe(t, y)
    })?);

    let mut store = ParamStore::new();
    let enc_cfg = EncoderConfig {
        input_dim: Some(5),
        ..EncoderConfig::toy(1)
    };
    let enc = EncoderBackend::new(&mut store, "text", &enc_cfg, 8, 2, 4, true, &mut rng)?;
    let raw = randn(&[4, 5], &mut rng);
    add("toy_encoder", l, max_relative_error(&store, &[], |t, _| {
        let y = enc.encode(t, &raw)?;
        probe(t, y)
    })?);

    let cross = BimodalClassifier::<f64>::new(tiny_model_config(FusionKind::CrossAttention), rng.random())?;
    let ins = [randn(&[3, 8], &mut rng), randn(&[5, 8], &mut rng)];
    add("align_text_to_audio", l, max_relative_error(&empty, &ins, |t, v| {
        let y = cross.align_text_to_audio(t, v[0])?;
        probe(t, y)
    })?);
    add("concat_fuse", l, max_relative_error(&empty, &ins, |t, v| {
        let y = cross.concat_fuse(t, v[0], v[1])?;
        probe(t, y)
    })?);
    let ins = [randn(&[5, 8], &mut rng), randn(&[5, 8], &mut rng)];
    add("cross_attention_fuse", l, max_relative_error(cross.params(), &ins, |t, v| {
        let y = cross.cross_attention_fuse(t, v[0], v[1], None)?;
        probe(t, y)
    })?);
    let head_seed: u64 = rng.random();
    add("classify_head", l, max_relative_error(cross.params(), &[ins[0].clone()], |t, v| {
        let mut r = Seed(head_seed).stream(Stream::Dropout);
        let y = cross.classify_head(t, v[0], true, &mut r)?;
        probe(t, y)
    })?);

    for (name, fusion, mask) in [
        ("model_concat", FusionKind::Concat, false),
        ("model_cross_attention", FusionKind::CrossAttention, false),
        ("model_cross_attention_masked", FusionKind::CrossAttention, true),
    ] {
        let cfg = ModelConfig {
            mask_padding: mask,
            ..tiny_model_config(fusion)
        };
        let mut model = BimodalClassifier::<f64>::new(cfg, rng.random())?;
        randomize(model.params_mut(), &mut rng);
        let text = randn(&[if mask { 2 } else { 3 }, 8], &mut rng);
        let audio = randn(&[if mask { 4 } else { 5 }, 8], &mut rng);
        let gold = rng.random_range(0..EmotionLabel::COUNT);
        let drop_seed: u64 = rng.random();
        add(name, MODEL_TOLERANCE, max_relative_error(model.params(), &[], |t, _| {
            let mut r = Seed(drop_seed).stream(Stream::Dropout);
            let logits = model.forward(t, &text, &audio, true, &mut r)?;
            t.cross_entropy(logits, gold, 1.3)
        })?);
    }

    if include_corrupted {
        let ins = [randn(&[3, 4], &mut rng)];
        add("square (corrupted rule)", l, max_relative_error(&empty, &ins, |t, v| {
            let x = t.value(v[0]).clone();
            let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|a| a * a).collect())?;
            let y = t.custom(
                "square (corrupted rule)",
                &[v[0]],
                value,
                Box::new(|inputs, _out, g| {
                    vec![inputs[0].data().iter().zip(g).map(|(x, g)| 3.0 * x * g).collect()]
                }),
            );
            probe(t, y)
        })?);
    }
    Ok(report)
}

/// Move every parameter away from its initializer (unit gains, zero biases)
/// so no gradient is trivially zero.
fn randomize(store: &mut ParamStore<f64>, rng: &mut crate::rng::Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
}
