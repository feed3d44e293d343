//! Criterion benchmarks of the fbflow kernels live in `benches/`.
