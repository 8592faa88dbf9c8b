//! Criterion benchmarks for the `cseg` kernels live in `benches/`.
