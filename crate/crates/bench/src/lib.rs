//! Criterion benchmarks for the kernels and the data pipeline live under `benches/`.
