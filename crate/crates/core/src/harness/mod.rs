//! Synthetic data, the small-instance reference solver and the grid error metric.

mod metric;
mod oracle;
mod synth;

pub use metric::{equispaced_grid, error_metric};
pub use oracle::{reference_fit_small, OracleError, OracleSolution, ORACLE_MAX_POINTS};
pub use synth::{synth_quadratic, synth_quadratic_with, SitePlacement};
