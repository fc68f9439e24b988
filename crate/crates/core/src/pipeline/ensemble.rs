use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MemberModel;
use crate::datamodel::Cohort;
use crate::deephit::predict_pmfs;
use crate::error::{Error, Result};
use crate::survcore::{expected_time, Pmf, TimeGrid};

/// Which trained members enter the inference ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleScope {
    /// Every (fold, seed) member.
    #[default]
    All,
    /// The first seed of each fold.
    FoldOnly,
}

pub fn select_members(members: &[MemberModel], scope: EnsembleScope) -> Vec<&MemberModel> {
    match scope {
        EnsembleScope::All => members.iter().collect(),
        EnsembleScope::FoldOnly => members.iter().filter(|m| m.seed_index == 0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub pmfs: Vec<Pmf>,
    pub expected_times: Vec<f64>,
    /// `-expected_time`.
    pub risks: Vec<f64>,
}

/// Unweighted mean of member PMFs, patient by patient.
pub fn average_pmfs(members: &[Vec<Pmf>]) -> Result<Vec<Pmf>> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble has no members".into()))?;
    let n = first.len();
    let k = first.first().map_or(0, Pmf::len);
    if members.iter().any(|m| m.len() != n || m.iter().any(|p| p.len() != k)) {
        return Err(Error::InvalidArgument(
            "ensemble members disagree on patients or bins".into(),
        ));
    }
    let scale = 1.0 / members.len() as f64;
    (0..n)
        .map(|i| {
            let mut acc = vec![0.0; k];
            for m in members {
                for (a, p) in acc.iter_mut().zip(m[i].probs()) {
                    *a += p;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            Pmf::new(acc)
        })
        .collect()
}

/// Expected time and risk for each ensemble PMF.
pub fn summarize(pmfs: Vec<Pmf>, grid: &TimeGrid) -> Result<EnsembleResult> {
    let expected_times = pmfs
        .iter()
        .map(|p| expected_time(p, grid))
        .collect::<Result<Vec<_>>>()?;
    let risks = expected_times.iter().map(|t| -t).collect();
    Ok(EnsembleResult {
        pmfs,
        expected_times,
        risks,
    })
}

/// PMFs of one member on raw (untransformed) matrices keyed by modality.
pub fn member_pmfs(member: &MemberModel, raw: &BTreeMap<String, Array2<f64>>) -> Result<Vec<Pmf>> {
    let inputs = member.transforms.apply_raw(raw)?;
    let views: Vec<_> = inputs.iter().map(|x| x.view()).collect();
    predict_pmfs(&views, &member.params)
}

/// Raw feature matrix of every modality of `cohort`, rows in record order.
pub fn raw_matrices(cohort: &Cohort) -> Result<BTreeMap<String, Array2<f64>>> {
    cohort
        .modalities
        .iter()
        .map(|m| Ok((m.name.clone(), cohort.matrix(&m.name)?)))
        .collect()
}

/// Ensemble PMF, expected time and risk for every patient of `cohort`.
pub fn ensemble_predict(members: &[&MemberModel], cohort: &Cohort) -> Result<EnsembleResult> {
    ensemble_predict_raw(members, &raw_matrices(cohort)?)
}

/// As [`ensemble_predict`] on raw matrices whose rows are aligned across modalities.
pub fn ensemble_predict_raw(members: &[&MemberModel], raw: &BTreeMap<String, Array2<f64>>) -> Result<EnsembleResult> {
    let grid = &members
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble has no members".into()))?
        .grid;
    if members.iter().any(|m| &m.grid != grid) {
        return Err(Error::InvalidArgument(
            "ensemble members use different time grids".into(),
        ));
    }
    let all = members
        .iter()
        .map(|m| member_pmfs(m, raw))
        .collect::<Result<Vec<_>>>()?;
    summarize(average_pmfs(&all)?, grid)
}
