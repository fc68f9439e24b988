//! Time discretization, PMF-derived quantities and Harrell's C-index.

mod concordance;
mod grid;
mod pmf;

pub use concordance::{c_index, concordance, Concordance};
pub use grid::{bin_index, build_time_grid, TimeGrid, DEFAULT_BINS};
pub use pmf::{expected_time, survival_curve, Pmf, PMF_TOLERANCE};
