//! Core domain types and cohort assembly.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::error::{Error, Result};

/// One patient's follow-up: time in months and whether the event was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub patient_id: String,
    pub time: f64,
    /// `true` = recurrence observed, `false` = censored.
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(patient_id: impl Into<String>, time: f64, event: bool) -> Result<Self> {
        let patient_id = patient_id.into();
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::InvalidRecord {
                id: patient_id,
                reason: format!("time must be positive and finite, got {time}"),
            });
        }
        Ok(Self {
            patient_id,
            time,
            event,
        })
    }
}

/// Per-patient feature vectors for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTable {
    pub name: String,
    pub dim: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl ModalityTable {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            rows: BTreeMap::new(),
        }
    }

    /// Builds a table from `(patient_id, row)` pairs, rejecting duplicates,
    /// ragged rows and non-finite values.
    pub fn from_rows<I>(name: impl Into<String>, dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = Self::new(name, dim);
        for (id, row) in rows {
            table.insert(id, row)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, patient_id: String, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "modality row",
                expected: self.dim,
                actual: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                id: patient_id,
                reason: format!("non-finite feature value {bad} in modality `{}`", self.name),
            });
        }
        if self.rows.contains_key(&patient_id) {
            return Err(Error::DuplicatePatient(patient_id));
        }
        self.rows.insert(patient_id, row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Records plus the modalities selected for modelling, aligned by patient.
///
/// After [`assemble_cohort`] every record has a row in every modality and
/// records are sorted by patient id.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub records: Vec<SurvivalRecord>,
    pub modalities: Vec<ModalityTable>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn modality_names(&self) -> Vec<&str> {
        self.modalities.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn modality(&self, name: &str) -> Option<&ModalityTable> {
        self.modalities.iter().find(|m| m.name == name)
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.patient_id.as_str()).collect()
    }

    /// Feature matrix of one modality, rows in record order.
    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        let table = self
            .modality(name)
            .ok_or_else(|| Error::UnknownModality(name.to_string()))?;
        let mut out = Array2::zeros((self.records.len(), table.dim));
        for (i, rec) in self.records.iter().enumerate() {
            let row = table.rows.get(&rec.patient_id).ok_or_else(|| Error::InvalidRecord {
                id: rec.patient_id.clone(),
                reason: format!("missing row in modality `{name}`"),
            })?;
            for (j, v) in row.iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        Ok(out)
    }

    /// Column-wise concatenation of several modalities.
    pub fn concat_matrix(&self, names: &[String]) -> Result<Array2<f64>> {
        let mats = names.iter().map(|n| self.matrix(n)).collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views)
            .map_err(|e| Error::InvalidArgument(format!("cannot concatenate modalities: {e}")))
    }

    /// Sub-cohort holding the given record positions (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        let records: Vec<SurvivalRecord> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let modalities = self
            .modalities
            .iter()
            .map(|m| {
                let rows = records
                    .iter()
                    .filter_map(|r| m.rows.get(&r.patient_id).map(|v| (r.patient_id.clone(), v.clone())))
                    .collect();
                ModalityTable {
                    name: m.name.clone(),
                    dim: m.dim,
                    rows,
                }
            })
            .collect();
        Cohort { records, modalities }
    }

    /// Restricts the cohort to a subset of its modalities, in the given order.
    pub fn select_modalities(&self, names: &[String]) -> Result<Cohort> {
        let modalities = names
            .iter()
            .map(|n| {
                self.modality(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownModality(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cohort {
            records: self.records.clone(),
            modalities,
        })
    }
}

/// Inner-joins records with the selected modality tables.
///
/// The output keeps only patients present in `records` and in every selected
/// table, sorted by patient id; modalities appear in `selected` order.
pub fn assemble_cohort(records: &[SurvivalRecord], tables: &[ModalityTable], selected: &[String]) -> Result<Cohort> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("no modalities selected".into()));
    }
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.patient_id.as_str()) {
            return Err(Error::DuplicatePatient(r.patient_id.clone()));
        }
    }
    let chosen = selected
        .iter()
        .map(|name| {
            tables
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::UnknownModality(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut kept: Vec<SurvivalRecord> = records
        .iter()
        .filter(|r| chosen.iter().all(|t| t.rows.contains_key(&r.patient_id)))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    kept.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    let modalities = chosen
        .iter()
        .map(|t| ModalityTable {
            name: t.name.clone(),
            dim: t.dim,
            rows: kept
                .iter()
                .map(|r| (r.patient_id.clone(), t.rows[&r.patient_id].clone()))
                .collect(),
        })
        .collect();
    Ok(Cohort {
        records: kept,
        modalities,
    })
}

/// Per-modality coverage and the patients lost to the inner join.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinReport {
    pub n_records: usize,
    /// `(modality, rows in table, rows matching a record)`.
    pub per_modality: Vec<(String, usize, usize)>,
    pub joined: usize,
    /// Labelled patients missing from at least one selected modality, with the missing modalities.
    pub dropped: Vec<(String, Vec<String>)>,
}

pub fn join_report(records: &[SurvivalRecord], tables: &[ModalityTable], selected: &[String]) -> JoinReport {
    let chosen: Vec<&ModalityTable> = selected
        .iter()
        .filter_map(|n| tables.iter().find(|t| &t.name == n))
        .collect();
    let ids: BTreeSet<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
    let per_modality = chosen
        .iter()
        .map(|t| {
            let matched = t.rows.keys().filter(|k| ids.contains(k.as_str())).count();
            (t.name.clone(), t.len(), matched)
        })
        .collect();
    let mut dropped = Vec::new();
    for id in &ids {
        let missing: Vec<String> = selected
            .iter()
            .filter(|n| !chosen.iter().any(|t| &t.name == *n && t.rows.contains_key(*id)))
            .cloned()
            .collect();
        if !missing.is_empty() {
            dropped.push((id.to_string(), missing));
        }
    }
    JoinReport {
        n_records: ids.len(),
        per_modality,
        joined: ids.len() - dropped.len(),
        dropped,
    }
}
