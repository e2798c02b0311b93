//! Library side of the `rvlab` binary: config parsing and serialization,
//! exposed for integration tests.

pub mod config;
pub mod emit;
