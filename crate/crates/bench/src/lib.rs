//! Criterion benchmarks for the hot paths: the kernel variance quadrature,
//! the L1 integrator and the block partition. Run with `cargo bench -p l1kde-bench`.
