use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{class_counts, EmotionLabel, Split, SplitDataset};
use crate::tensor::Scalar;

pub const MELD_TRAIN_SIZE: usize = 9988;
pub const MELD_VALIDATION_SIZE: usize = 1108;
pub const MELD_TEST_SIZE: usize = 2610;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemaViolation {
    SplitSize {
        split: Split,
        expected: usize,
        actual: usize,
    },
    WrongSplit {
        expected: Split,
        found: Split,
    },
    MissingLabel {
        label: EmotionLabel,
    },
    DuplicateId {
        id: String,
        first: Split,
        second: Split,
    },
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::SplitSize {
                split,
                expected,
                actual,
            } => write!(f, "{split} split has {actual} utterances, expected {expected}"),
            SchemaViolation::WrongSplit { expected, found } => {
                write!(f, "dataset given as {expected} split is tagged {found}")
            }
            SchemaViolation::MissingLabel { label } => write!(f, "train split has no {label} utterances"),
            SchemaViolation::DuplicateId { id, first, second } => {
                if first == second {
                    write!(f, "id {id:?} appears twice in {first} split")
                } else {
                    write!(f, "id {id:?} leaks between {first} and {second} splits")
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SchemaReport {
    pub violations: Vec<SchemaViolation>,
}

impl SchemaReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check three splits against the MELD partition: 9,988 / 1,108 / 2,610
/// utterances, every emotion present in train, no id shared between or
/// within splits.
pub fn validate_meld_schema<T: Scalar>(
    train: &SplitDataset<T>,
    validation: &SplitDataset<T>,
    test: &SplitDataset<T>,
) -> SchemaReport {
    let mut violations = Vec::new();
    let splits = [
        (Split::Train, train, MELD_TRAIN_SIZE),
        (Split::Validation, validation, MELD_VALIDATION_SIZE),
        (Split::Test, test, MELD_TEST_SIZE),
    ];
    for (split, ds, expected) in splits {
        if ds.split != split {
            violations.push(SchemaViolation::WrongSplit {
                expected: split,
                found: ds.split,
            });
        }
        if ds.len() != expected {
            violations.push(SchemaViolation::SplitSize {
                split,
                expected,
                actual: ds.len(),
            });
        }
    }
    let counts = class_counts(train);
    for label in EmotionLabel::ALL {
        if counts[label.index()] == 0 {
            violations.push(SchemaViolation::MissingLabel { label });
        }
    }
    let mut seen: HashMap<&str, Split> = HashMap::new();
    for (split, ds, _) in splits {
        for r in &ds.records {
            if let Some(first) = seen.insert(r.id.as_str(), split) {
                violations.push(SchemaViolation::DuplicateId {
                    id: r.id.clone(),
                    first,
                    second: split,
                });
            }
        }
    }
    SchemaReport { violations }
}
