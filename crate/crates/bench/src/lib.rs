//! Benchmarks only; run them with `cargo bench -p cutflip-bench`.
