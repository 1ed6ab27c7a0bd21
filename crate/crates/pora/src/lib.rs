//! File formats, parallel batches, latency benchmarks and the `pora`
//! command line on top of `pora-core`.

pub mod batch;
pub mod bench;
pub mod cli;
pub mod experiments;
pub mod io;
pub mod manifest;

pub use pora_core as core;
