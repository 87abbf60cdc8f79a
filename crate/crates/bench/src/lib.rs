//! Criterion benchmarks for idfuse. The crate has no library code; see
//! `benches/kernels.rs` for the geometric and assignment kernels and
//! `benches/pipeline.rs` for a full scene.
