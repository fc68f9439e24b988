use super::{run_cox_cv, run_cv, CoxCvResult, CvConfig, CvResult, FoldAssignment};
use crate::datamodel::Cohort;
use crate::error::{Error, Result};

/// One row of the modality comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    /// Modality names joined with `+`; the baseline row is prefixed `coxph:`.
    pub subset: String,
    pub mean_c: f64,
    pub std_c: f64,
    pub n_models: usize,
    pub fold_c: Vec<f64>,
    pub fold_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEval {
    pub rows: Vec<SubsetRow>,
    pub runs: Vec<CvResult>,
    pub cox: Option<CoxCvResult>,
    pub fold_hash: u64,
}

impl GridEval {
    pub fn row(&self, subset: &str) -> Option<&SubsetRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }
}

pub fn subset_label(modalities: &[String]) -> String {
    modalities.join("+")
}

/// Cross-validates each modality subset on the same fold assignment, then
/// optionally a Cox baseline on `baseline` modalities.
pub fn modality_grid_eval(
    cohort: &Cohort,
    subsets: &[Vec<String>],
    folds: &FoldAssignment,
    config: &CvConfig,
    baseline: Option<&[String]>,
) -> Result<GridEval> {
    if subsets.is_empty() {
        return Err(Error::InvalidArgument("no modality subsets to evaluate".into()));
    }
    for s in subsets.iter().map(Vec::as_slice).chain(baseline) {
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty modality subset".into()));
        }
        if let Some(missing) = s.iter().find(|m| cohort.modality(m).is_none()) {
            return Err(Error::UnknownModality(missing.clone()));
        }
    }
    let fold_hash = folds.fingerprint();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for subset in subsets {
        let run = run_cv(&cohort.select_modalities(subset)?, folds, config)?;
        if run.fold_hash != fold_hash {
            return Err(Error::InvalidArgument("fold assignment changed between subsets".into()));
        }
        rows.push(SubsetRow {
            subset: subset_label(subset),
            mean_c: run.mean_c,
            std_c: run.std_c,
            n_models: run.members.len(),
            fold_c: run.fold_c.clone(),
            fold_hash: run.fold_hash,
        });
        runs.push(run);
    }
    let cox = match baseline {
        Some(b) => {
            let cox = run_cox_cv(&cohort.select_modalities(b)?, folds, config)?;
            rows.push(SubsetRow {
                subset: format!("coxph:{}", subset_label(b)),
                mean_c: cox.mean_c,
                std_c: cox.std_c,
                n_models: cox.folds.len(),
                fold_c: cox.fold_c.clone(),
                fold_hash,
            });
            Some(cox)
        }
        None => None,
    };
    Ok(GridEval {
        rows,
        runs,
        cox,
        fold_hash,
    })
}
