//! Synthetic bimodal datasets.
//!
//! Every class `c` owns a text prototype sequence `u_c: [T_t×d]` and an audio
//! prototype `v_c: [T_a×d]`. A record is a (text, audio) prototype pair plus
//! Gaussian noise.
//!
//! Classes are grouped in pairs `(0,1)`, `(2,3)`, `(4,5)`; class 6 has no
//! partner. With probability `interaction_strength` a record of a paired
//! class is drawn in "interaction" form, where only the combination of the
//! two modalities identifies the class:
//!
//! ```text
//! class a: (u_a, v_a) or (u_b, v_b)
//! class b: (u_a, v_b) or (u_b, v_a)
//! ```
//!
//! Each modality alone then sees `u_a`/`u_b` (or `v_a`/`v_b`) equally often
//! under both labels, so any model whose logits are a sum of a text term and
//! an audio term cannot separate `a` from `b`. Otherwise a record uses
//! `(u_c, v_c)` and either modality suffices.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EmotionLabel, Split, SplitDataset, UtteranceRecord};
use crate::error::{Error, Result};
use crate::rng::{Seed, Stream};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub dim: usize,
    pub text_len: usize,
    pub audio_len: usize,
    /// Class probabilities in canonical label order.
    pub priors: Vec<f64>,
    pub interaction_strength: f64,
    /// Standard deviation of per-element noise.
    pub noise: f64,
    /// Standard deviation of prototype entries.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_train: 256,
            n_validation: 64,
            n_test: 64,
            dim: 8,
            text_len: 3,
            audio_len: 5,
            priors: vec![1.0 / EmotionLabel::COUNT as f64; EmotionLabel::COUNT],
            interaction_strength: 0.0,
            noise: 0.3,
            separation: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.priors.len() != EmotionLabel::COUNT {
            return Err(Error::InvalidParameter(format!(
                "priors: expected {} values, got {}",
                EmotionLabel::COUNT,
                self.priors.len()
            )));
        }
        if self.priors.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter("priors: values must be finite and non-negative".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("priors: values sum to {total}, expected 1")));
        }
        if !(0.0..=1.0).contains(&self.interaction_strength) {
            return Err(Error::InvalidParameter(format!(
                "interaction_strength {} not in [0, 1]",
                self.interaction_strength
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidParameter("noise must be >= 0 and separation > 0".into()));
        }
        if self.dim == 0 || self.text_len == 0 || self.audio_len == 0 {
            return Err(Error::InvalidParameter("dim, text_len and audio_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplits<T: Scalar = f32> {
    pub train: SplitDataset<T>,
    pub validation: SplitDataset<T>,
    pub test: SplitDataset<T>,
}

/// Interaction partner of a class, if it has one.
pub fn partner(class: usize) -> Option<usize> {
    match class {
        0..=5 => Some(class ^ 1),
        _ => None,
    }
}

struct Prototypes {
    text: Vec<Vec<f64>>,
    audio: Vec<Vec<f64>>,
}

pub fn generate_synthetic<T: Scalar>(cfg: &SyntheticConfig) -> Result<SyntheticSplits<T>> {
    cfg.validate()?;
    let mut rng = Seed(cfg.seed).stream(Stream::Data);
    let proto_dist = Normal::new(0.0, cfg.separation).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let draw = |n: usize, rng: &mut crate::rng::Rng| -> Vec<f64> { (0..n).map(|_| proto_dist.sample(rng)).collect() };
    let protos = Prototypes {
        text: (0..EmotionLabel::COUNT)
            .map(|_| draw(cfg.text_len * cfg.dim, &mut rng))
            .collect(),
        audio: (0..EmotionLabel::COUNT)
            .map(|_| draw(cfg.audio_len * cfg.dim, &mut rng))
            .collect(),
    };
    let mut make = |split: Split, n: usize| -> Result<SplitDataset<T>> {
        let mut ds = SplitDataset::new(split, cfg.dim, cfg.text_len, cfg.audio_len);
        for i in 0..n {
            let record = sample_record(cfg, &protos, &mut rng, format!("{split}-{i:06}"))?;
            ds.push(record)?;
        }
        Ok(ds)
    };
    Ok(SyntheticSplits {
        train: make(Split::Train, cfg.n_train)?,
        validation: make(Split::Validation, cfg.n_validation)?,
        test: make(Split::Test, cfg.n_test)?,
    })
}

fn sample_label(priors: &[f64], rng: &mut crate::rng::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in priors.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc && *p > 0.0 {
            return i;
        }
    }
    last_positive
}

fn sample_record<T: Scalar>(
    cfg: &SyntheticConfig,
    protos: &Prototypes,
    rng: &mut crate::rng::Rng,
    id: String,
) -> Result<UtteranceRecord<T>> {
    let class = sample_label(&cfg.priors, rng);
    let interact = rng.random::<f64>() < cfg.interaction_strength;
    let flip = rng.random::<bool>();
    let (text_class, audio_class) = match partner(class) {
        Some(other) if interact => {
            let first = class.min(other);
            let second = class.max(other);
            match (class == first, flip) {
                (true, false) => (first, first),
                (true, true) => (second, second),
                (false, false) => (first, second),
                (false, true) => (second, first),
            }
        }
        _ => (class, class),
    };
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut noisy = |proto: &[f64], rows: usize| -> Result<Tensor<T>> {
        let data = proto
            .iter()
            .map(|p| T::from_f64(if cfg.noise > 0.0 { p + noise.sample(rng) } else { *p }))
            .collect();
        Tensor::new(vec![rows, cfg.dim], data)
    };
    Ok(UtteranceRecord {
        id,
        label: EmotionLabel::from_index(class).expect("class index within label set"),
        text: noisy(&protos.text[text_class], cfg.text_len)?,
        audio: noisy(&protos.audio[audio_class], cfg.audio_len)?,
    })
}
