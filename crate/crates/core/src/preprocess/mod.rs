//! Feature preprocessing: clinical value encoding, z-score standardization and PCA.

mod clinical;
mod pca;
mod standardize;

pub use clinical::{encode_clinical, encode_value, ClinicalEncoding, Exclusion, RawClinical, RawValue};
pub use pca::{apply_pca, fit_pca, PcaModel};
pub use standardize::{apply_standardizer, fit_standardizer, Standardizer, CONSTANT_STD};
