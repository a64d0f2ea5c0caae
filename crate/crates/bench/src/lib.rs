//! Criterion benchmarks for the levy-rds kernels live in `benches/`.
