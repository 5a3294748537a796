//! Bimodal (text + audio) utterance emotion classification.
//!
//! The crate contains a small reverse-mode autodiff tensor library, the
//! layers built on it (linear, multi-head attention, transformer encoder
//! block), two fusion architectures, training with weighted cross-entropy
//! and AdamW, evaluation metrics, and an on-disk dataset format.
//!
//! ```no_run
//! use xmodal_core::{BimodalClassifier, FusionKind, ModelConfig};
//!
//! let cfg = ModelConfig { dim: 8, num_heads: 2, text_len: 3, audio_len: 5,
//!                         fusion: FusionKind::CrossAttention, ..ModelConfig::default() };
//! let model = BimodalClassifier::<f32>::new(cfg, 0).unwrap();
//! ```

pub mod data;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

pub use data::{EmotionLabel, Split, SplitDataset, SyntheticConfig, UtteranceRecord};
pub use encoders::{EncoderBackend, EncoderConfig, EncoderKind};
pub use error::{Error, Result};
pub use fusion::{BimodalClassifier, FusionKind, ModelConfig};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use rng::{Seed, Stream};
pub use tensor::{DType, Scalar, Tape, Tensor, Var};
pub use training::{ClassWeightMode, TrainConfig, TrainHistory};
