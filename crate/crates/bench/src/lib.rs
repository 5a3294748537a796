//! Criterion benchmarks for xmodal-core layers; see `benches/layers.rs`.
