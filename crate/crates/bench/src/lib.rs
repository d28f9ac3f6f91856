//! Criterion benchmarks for orbital-raman. Run with `cargo bench -p orbital-raman-bench`.
