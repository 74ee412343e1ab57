//! Criterion benchmarks for the learners; see `benches/learners.rs`.
