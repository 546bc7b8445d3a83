//! Criterion benchmarks for gate selection, checkpoint restore and full recovery.
//! Run with `cargo bench -p semrec-bench`.
