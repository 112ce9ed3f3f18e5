//! Feature correlation, per-class feature densities, and the accuracy table.

mod correlation;
mod density;
mod report;

pub use correlation::{pearson_correlation, CorrelationMatrix};
pub use density::{class_density, silverman_bandwidth, DensityCurve, GRID_POINTS};
pub use report::{fidelity, make_report, write_table, Comparison, Report, TABLE_HEADER};
