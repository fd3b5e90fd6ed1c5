//! Benchmark-only crate; see `benches/pikan.rs`.
