//! Fusion architectures and the full bimodal classifier.
//!
//! ```text
//! Concat:         [enc_t(text) ; enc_a(audio)]            → flatten → dropout → linear
//! CrossAttention: c = MHA(Q = pad(text), K = audio, V = pad(text))
//!                 s = MHA(Q = c, K = c, V = c)            → flatten → dropout → linear
//! ```
//!
//! In the cross stage keys come from audio while queries and values both come
//! from the zero-padded text sequence.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmotionLabel, UtteranceRecord};
use crate::encoders::{EncoderBackend, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Linear, MultiHeadAttention, ParamStore};
use crate::rng::{Seed, Stream};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionKind {
    Concat,
    CrossAttention,
}

impl std::fmt::Display for FusionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionKind::Concat => "concat",
            FusionKind::CrossAttention => "cross-attention",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub num_heads: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub fusion: FusionKind,
    /// Fixed text sequence length; shorter sequences are zero-padded.
    pub text_len: usize,
    /// Fixed audio sequence length; shorter sequences are zero-padded.
    pub audio_len: usize,
    /// Exclude padded positions from attention.
    pub mask_padding: bool,
    /// Update toy encoder parameters during training.
    pub train_encoders: bool,
    /// Cut sequences longer than the fixed lengths instead of failing.
    pub truncate: bool,
    /// Insert a hidden linear layer of this width before the classifier.
    pub hidden_head_dim: Option<usize>,
    pub text_encoder: EncoderConfig,
    pub audio_encoder: EncoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 768,
            num_heads: 128,
            num_classes: EmotionLabel::COUNT,
            dropout: 0.1,
            fusion: FusionKind::CrossAttention,
            text_len: 20,
            audio_len: 1214,
            mask_padding: false,
            train_encoders: true,
            truncate: false,
            hidden_head_dim: None,
            text_encoder: EncoderConfig::default(),
            audio_encoder: EncoderConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_heads == 0 {
            return Err(Error::Config("dim and num_heads must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "model dim {} is not divisible by {} attention heads",
                self.dim, self.num_heads
            )));
        }
        if !(2..=EmotionLabel::COUNT).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "num_classes must be between 2 and {}, got {}",
                EmotionLabel::COUNT,
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.text_len == 0 || self.audio_len == 0 {
            return Err(Error::Config("text_len and audio_len must be positive".into()));
        }
        if self.fusion == FusionKind::CrossAttention && self.text_len > self.audio_len && !self.truncate {
            return Err(Error::Config(format!(
                "text_len {} exceeds audio_len {}; cross-attention pads text up to the audio length",
                self.text_len, self.audio_len
            )));
        }
        if self.hidden_head_dim == Some(0) {
            return Err(Error::Config("hidden_head_dim must be positive".into()));
        }
        Ok(())
    }

    /// Length of the flattened vector entering the head.
    pub fn head_input_dim(&self) -> usize {
        match self.fusion {
            FusionKind::Concat => (self.text_len + self.audio_len) * self.dim,
            FusionKind::CrossAttention => self.audio_len * self.dim,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossAttentionLayers {
    pub cross: MultiHeadAttention,
    pub self_attn: MultiHeadAttention,
}

#[derive(Debug, Clone)]
pub struct BimodalClassifier<T: Scalar = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    text_encoder: EncoderBackend,
    audio_encoder: EncoderBackend,
    fusion: Option<CrossAttentionLayers>,
    hidden: Option<Linear>,
    head: Linear,
}

impl<T: Scalar> BimodalClassifier<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Seed(seed).stream(Stream::Init);
        let mut params = ParamStore::new();
        let c = &config;
        let limit = |len: usize| if c.truncate { usize::MAX } else { len };
        let text_encoder = EncoderBackend::new(
            &mut params,
            "text",
            &c.text_encoder,
            c.dim,
            c.num_heads,
            limit(c.text_len),
            c.train_encoders,
            &mut rng,
        )?;
        let audio_encoder = EncoderBackend::new(
            &mut params,
            "audio",
            &c.audio_encoder,
            c.dim,
            c.num_heads,
            limit(c.audio_len),
            c.train_encoders,
            &mut rng,
        )?;
        let fusion = match c.fusion {
            FusionKind::Concat => None,
            FusionKind::CrossAttention => Some(CrossAttentionLayers {
                cross: MultiHeadAttention::new(&mut params, "fusion.cross_attn", c.dim, c.num_heads, true, &mut rng)?,
                self_attn: MultiHeadAttention::new(&mut params, "fusion.self_attn", c.dim, c.num_heads, true, &mut rng)?,
            }),
        };
        let flat = c.head_input_dim();
        let (hidden, head_in) = match c.hidden_head_dim {
            Some(h) => (Some(Linear::new(&mut params, "head.hidden", flat, h, true, &mut rng)?), h),
            None => (None, flat),
        };
        let head = Linear::new(&mut params, "head.classifier", head_in, c.num_classes, true, &mut rng)?;
        let model = Self {
            config,
            params,
            text_encoder,
            audio_encoder,
            fusion,
            hidden,
            head,
        };
        let first = model.hidden.as_ref().unwrap_or(&model.head);
        if first.in_dim() != model.config.head_input_dim() {
            return Err(Error::Config(format!(
                "head input {} does not match fused size {}",
                first.in_dim(),
                model.config.head_input_dim()
            )));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn text_encoder(&self) -> &EncoderBackend {
        &self.text_encoder
    }

    pub fn audio_encoder(&self) -> &EncoderBackend {
        &self.audio_encoder
    }

    pub fn fusion_layers(&self) -> Option<&CrossAttentionLayers> {
        self.fusion.as_ref()
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn hidden_layer(&self) -> Option<&Linear> {
        self.hidden.as_ref()
    }

    /// Input width of the first head layer.
    pub fn head_input_dim(&self) -> usize {
        self.hidden.as_ref().unwrap_or(&self.head).in_dim()
    }

    /// Zero-pad `[T_t×d]` text to `[T_a×d]`.
    pub fn align_text_to_audio(&self, tape: &mut Tape<'_, T>, text: Var) -> Result<Var> {
        tape.pad_to_length(text, self.config.audio_len, self.config.truncate)
    }

    /// Row-wise concatenation, text first.
    pub fn concat_fuse(&self, tape: &mut Tape<'_, T>, text: Var, audio: Var) -> Result<Var> {
        concat_fuse(tape, text, audio)
    }

    /// Cross stage then self stage. `key_mask[j]` drops position `j` from
    /// both softmaxes.
    pub fn cross_attention_fuse(
        &self,
        tape: &mut Tape<'_, T>,
        text_padded: Var,
        audio: Var,
        key_mask: Option<&[bool]>,
    ) -> Result<Var> {
        let layers = self
            .fusion
            .as_ref()
            .ok_or_else(|| Error::Config("model was built with concat fusion".into()))?;
        let (ta, _) = tape.value(text_padded).dims2()?;
        let (tk, _) = tape.value(audio).dims2()?;
        if ta != tk {
            return Err(Error::Shape {
                op: "cross_attention_fuse",
                lhs: tape.value(text_padded).shape().to_vec(),
                rhs: tape.value(audio).shape().to_vec(),
            });
        }
        let c = layers.cross.forward(tape, text_padded, audio, text_padded, key_mask)?;
        layers.self_attn.forward(tape, c, c, c, key_mask)
    }

    /// flatten → dropout → [hidden linear → dropout →] linear.
    pub fn classify_head<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        combined: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let flat = tape.flatten(combined)?;
        let n = tape.value(flat).numel();
        if n != self.head_input_dim() {
            return Err(Error::Shape {
                op: "classify_head",
                lhs: tape.value(combined).shape().to_vec(),
                rhs: vec![self.head_input_dim()],
            });
        }
        let mut x = tape.dropout(flat, self.config.dropout, training, rng)?;
        if let Some(hidden) = &self.hidden {
            x = hidden.forward(tape, x)?;
            x = tape.dropout(x, self.config.dropout, training, rng)?;
        }
        self.head.forward(tape, x)
    }

    /// Logits `[num_classes]` for one utterance.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        text: &Tensor<T>,
        audio: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let cfg = &self.config;
        let t = self.text_encoder.encode(tape, text)?;
        let a = self.audio_encoder.encode(tape, audio)?;
        let a = tape.pad_to_length(a, cfg.audio_len, cfg.truncate)?;
        let combined = match cfg.fusion {
            FusionKind::Concat => {
                let t = tape.pad_to_length(t, cfg.text_len, cfg.truncate)?;
                self.concat_fuse(tape, t, a)?
            }
            FusionKind::CrossAttention => {
                let mask = cfg.mask_padding.then(|| {
                    let real = text.shape()[0].min(audio.shape()[0]);
                    (0..cfg.audio_len).map(|j| j >= real).collect::<Vec<_>>()
                });
                let t = self.align_text_to_audio(tape, t)?;
                self.cross_attention_fuse(tape, t, a, mask.as_deref())?
            }
        };
        self.classify_head(tape, combined, training, rng)
    }

    pub fn forward_record<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        record: &UtteranceRecord<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        self.forward(tape, &record.text, &record.audio, training, rng)
    }

    /// Eval-mode logits.
    pub fn logits(&self, text: &Tensor<T>, audio: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::with_params(&self.params);
        let mut rng = Seed(0).stream(Stream::Dropout);
        let out = self.forward(&mut tape, text, audio, false, &mut rng)?;
        let mut t = tape.value(out).clone();
        t.set_requires_grad(false);
        Ok(t)
    }

    pub fn predict(&self, record: &UtteranceRecord<T>) -> Result<EmotionLabel> {
        let logits = self.logits(&record.text, &record.audio)?;
        Ok(label_of(argmax(logits.data())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save_params(dir, &self.config, &self.params)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (config, store) = checkpoint::load_params::<T, ModelConfig>(dir)?;
        let mut model = Self::new(config, 0)?;
        model
            .params
            .load_values(&store)
            .map_err(|e| Error::Config(format!("checkpoint in {} does not match its model config: {e}", dir.display())))?;
        Ok(model)
    }
}

/// Row-wise concatenation of `[T_t×d]` and `[T_a×d]`, text first.
pub fn concat_fuse<T: Scalar>(tape: &mut Tape<'_, T>, text: Var, audio: Var) -> Result<Var> {
    let (_, dt) = tape.value(text).dims2()?;
    let (_, da) = tape.value(audio).dims2()?;
    if dt != da {
        return Err(Error::Shape {
            op: "concat_fuse",
            lhs: tape.value(text).shape().to_vec(),
            rhs: tape.value(audio).shape().to_vec(),
        });
    }
    tape.concat(&[text, audio], 0)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn label_of(index: usize) -> EmotionLabel {
    EmotionLabel::from_index(index).expect("num_classes never exceeds the label set")
}
