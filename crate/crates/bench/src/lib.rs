//! Criterion benchmarks for the hot paths of `sphereflow-core`; see `benches/`.
