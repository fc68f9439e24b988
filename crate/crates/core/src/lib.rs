//! Multimodal discrete-time survival modelling.
//!
//! The crate is organised bottom-up:
//!
//! - [`datamodel`]: survival records, per-modality feature tables and cohort assembly.
//! - [`preprocess`]: clinical value encoding, z-score standardization and PCA.
//! - [`survcore`]: time discretization, PMF-derived quantities and Harrell's C-index.
//! - [`coxph`]: Cox proportional-hazards baseline (Newton–Raphson, Breslow ties).
//! - [`deephit`]: the multimodal network (projection, cross-attention fusion,
//!   PMF head), its loss, analytic gradients, Adam and the early-stopped training loop.
//! - [`pipeline`]: stratified folds, cross-validation over seeds, ensembling,
//!   modality-subset evaluation and the synthetic cohort generator.
//! - [`io`]: the delimited-text and flat numeric file formats.

pub mod coxph;
pub mod datamodel;
pub mod deephit;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod survcore;

pub use error::{Error, Result};
