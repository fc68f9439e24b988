//! Cross-validation, ensembling, modality-subset evaluation and synthetic cohorts.

mod cv;
mod ensemble;
mod folds;
mod grid_eval;
mod synth;

pub use cv::{
    format_mean_std, mean_std, run_cox_cv, run_cv, CoxCvResult, CoxFold, CvConfig, CvResult, FoldTransforms,
    MemberModel, ModalityTransform, PcaScope, PcaSpec,
};
pub use ensemble::{
    average_pmfs, ensemble_predict, ensemble_predict_raw, member_pmfs, raw_matrices, select_members, summarize,
    EnsembleResult, EnsembleScope,
};
pub use folds::{stratification_violations, stratified_kfold, FoldAssignment};
pub use grid_eval::{modality_grid_eval, subset_label, GridEval, SubsetRow};
pub use synth::{generate_synthetic_cohort, SyntheticCohort, SyntheticModality, SyntheticSpec};
