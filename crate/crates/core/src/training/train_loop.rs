use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adamw_step, class_weights, early_stop_check, AdamWConfig, ClassWeightMode, EvalRecord, OptimizerState, TrainHistory};
use crate::data::{class_counts, SplitDataset};
use crate::error::{Error, Result};
use crate::fusion::{argmax, BimodalClassifier};
use crate::metrics::weighted_f1;
use crate::rng::{Seed, Stream};
use crate::tensor::{Scalar, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub class_weights: ClassWeightMode,
    pub seed: u64,
    /// Validate every this many epochs (and after the last one).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-8,
            batch_size: 2,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.01,
            max_epochs: 10,
            patience: 1,
            class_weights: ClassWeightMode::InverseFrequency,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config(format!("betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("eps must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Eval-mode predicted class indices, computed in parallel.
pub fn predict_indices<T: Scalar>(model: &BimodalClassifier<T>, ds: &SplitDataset<T>) -> Result<Vec<usize>> {
    ds.records
        .par_iter()
        .map(|r| model.logits(&r.text, &r.audio).map(|l| argmax(l.data())))
        .collect()
}

/// Validation weighted F1.
pub fn evaluate<T: Scalar>(model: &BimodalClassifier<T>, ds: &SplitDataset<T>) -> Result<f64> {
    let preds = predict_indices(model, ds)?;
    let golds: Vec<usize> = ds.records.iter().map(|r| r.label.index()).collect();
    weighted_f1(&golds, &preds, model.config().num_classes)
}

pub fn train_loop<T: Scalar>(
    model: &mut BimodalClassifier<T>,
    train: &SplitDataset<T>,
    val: &SplitDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_loop_with(model, train, val, cfg, |_| {})
}

/// Train, calling `on_eval` after each validation pass. On return the model
/// holds the parameters of the best validation weighted F1.
pub fn train_loop_with<T: Scalar>(
    model: &mut BimodalClassifier<T>,
    train: &SplitDataset<T>,
    val: &SplitDataset<T>,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&EvalRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidParameter("train and validation splits must be non-empty".into()));
    }
    let classes = model.config().num_classes;
    for r in train.records.iter().chain(&val.records) {
        if r.label.index() >= classes {
            return Err(Error::ClassIndex {
                index: r.label.index(),
                classes,
            });
        }
    }
    let weights = class_weights(&class_counts(train)[..classes], cfg.class_weights)?;
    let adam = cfg.adamw();
    let mut state = OptimizerState::new();
    let mut shuffle_rng = Seed(cfg.seed).stream(Stream::Shuffle);
    let mut dropout_rng = Seed(cfg.seed).stream(Stream::Dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::new();
    let mut best = model.params().clone();
    let start = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let denom: f64 = chunk.iter().map(|&i| weights[train.records[i].label.index()]).sum();
            if denom == 0.0 {
                continue;
            }
            model.params_mut().zero_grad();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let r = &train.records[i];
                let gold = r.label.index();
                let grads = {
                    let mut tape = Tape::with_params(model.params());
                    let logits = model.forward_record(&mut tape, r, true, &mut dropout_rng)?;
                    let loss = tape.cross_entropy(logits, gold, T::from_f64(weights[gold] / denom))?;
                    let value = tape.value(loss).data()[0].to_f64();
                    if !value.is_finite() {
                        return Err(Error::NonFiniteLoss { epoch, batch: b });
                    }
                    batch_loss += value;
                    tape.backward(loss)?
                };
                model.params_mut().accumulate(&grads)?;
            }
            adamw_step(model.params_mut(), &mut state, &adam)?;
            loss_sum += batch_loss;
            batches += 1;
        }
        model.params_mut().zero_grad();
        if epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs {
            let record = EvalRecord {
                epoch,
                train_loss: if batches == 0 { 0.0 } else { loss_sum / batches as f64 },
                val_weighted_f1: evaluate(model, val)?,
                wall_secs: start.elapsed().as_secs_f64(),
            };
            if history.push(record) {
                best = model.params().clone();
            }
            on_eval(&record);
            if early_stop_check(&history, cfg.patience) {
                break;
            }
        }
    }
    model.params_mut().load_values(&best)?;
    Ok(history)
}
