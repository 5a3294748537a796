use serde::{Deserialize, Serialize};

/// One validation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_weighted_f1: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    /// Index of the highest validation weighted F1, earliest on ties.
    pub best: Option<usize>,
}

impl TrainHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record an evaluation; returns true if it is the new best.
    pub fn push(&mut self, record: EvalRecord) -> bool {
        self.records.push(record);
        let improved = match self.best {
            None => true,
            Some(b) => record.val_weighted_f1 > self.records[b].val_weighted_f1,
        };
        if improved {
            self.best = Some(self.records.len() - 1);
        }
        improved
    }

    pub fn from_f1s(f1s: &[f64]) -> Self {
        let mut h = Self::new();
        for (i, f) in f1s.iter().enumerate() {
            h.push(EvalRecord {
                epoch: i + 1,
                train_loss: 0.0,
                val_weighted_f1: *f,
                wall_secs: 0.0,
            });
        }
        h
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_record(&self) -> Option<&EvalRecord> {
        self.best.map(|b| &self.records[b])
    }

    /// JSON Lines, one record per evaluation.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain record serializes") + "\n")
            .collect()
    }
}

/// True once `patience` evaluations have passed since the best one.
pub fn early_stop_check(history: &TrainHistory, patience: usize) -> bool {
    match history.best {
        Some(b) => history.records.len() - 1 - b >= patience,
        None => false,
    }
}
