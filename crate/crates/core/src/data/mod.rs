//! Datasets: labels, split storage, schema checks and synthetic generation.

mod dataset;
mod label;
mod schema;
mod synthetic;

pub use dataset::{
    class_counts, read_dataset, write_dataset, DatasetReader, Split, SplitDataset, UtteranceRecord, FEATURES_FILE,
    MANIFEST_FILE,
};
pub use label::EmotionLabel;
pub use schema::{
    validate_meld_schema, SchemaReport, SchemaViolation, MELD_TEST_SIZE, MELD_TRAIN_SIZE, MELD_VALIDATION_SIZE,
};
pub use synthetic::{generate_synthetic, partner, SyntheticConfig, SyntheticSplits};
