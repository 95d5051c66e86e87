//! Criterion benchmarks for sedkit; see `benches/`.
