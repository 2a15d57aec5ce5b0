//! Criterion benchmarks for `diqsc-core`; see `benches/`.
