//! File formats, command-line front end and benchmarks around `cvxreg-core`.

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use error::CliError;
