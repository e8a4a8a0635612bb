//! Criterion benchmarks for the `curveflow` schemes live in `benches/`.
