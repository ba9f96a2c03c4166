//! Criterion benchmarks for the assembly and time-stepping kernels live in `benches/`.
