use std::collections::{BTreeMap, BTreeSet};

use crate::datamodel::ModalityTable;
use crate::error::{Error, Result};

/// A raw clinical value as read from a per-patient object file.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Text(String),
    Bool(bool),
    Missing,
}

/// One patient's flat key → value map.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClinical {
    pub patient_id: String,
    pub values: BTreeMap<String, RawValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub patient_id: String,
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalEncoding {
    pub table: ModalityTable,
    /// Feature names in column order.
    pub features: Vec<String>,
    pub excluded: Vec<Exclusion>,
}

/// Casts a single raw value to a real number.
///
/// Plain numbers pass through; strings are parsed as numbers, or as a
/// numeric prefix followed by one letter, encoded as
/// `prefix + 0.1 * letter_index` with `a` = 1 (so `"12a"` → 12.1).
/// Returns `None` for anything else, including empty strings.
pub fn encode_value(value: &RawValue) -> Option<f64> {
    let v = match value {
        RawValue::Number(x) => *x,
        RawValue::Bool(b) => f64::from(u8::from(*b)),
        RawValue::Missing => return None,
        RawValue::Text(s) => parse_text(s.trim())?,
    };
    v.is_finite().then_some(v)
}

fn parse_text(s: &str) -> Option<f64> {
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let last = s.chars().last()?;
    if !last.is_ascii_alphabetic() {
        return None;
    }
    let prefix = &s[..s.len() - 1];
    let base: f64 = prefix.trim().parse().ok()?;
    let ordinal = (last.to_ascii_lowercase() as u8 - b'a' + 1) as f64;
    Some(base + 0.1 * ordinal)
}

/// Encodes per-patient clinical maps into a numeric table.
///
/// The feature set is the sorted union of keys. A patient lacking any key or
/// holding a value that cannot be cast is dropped and listed in `excluded`
/// with the first offending key.
pub fn encode_clinical(raw: &[RawClinical]) -> Result<ClinicalEncoding> {
    let features: Vec<String> = raw
        .iter()
        .flat_map(|r| r.values.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if features.is_empty() {
        return Err(Error::InvalidArgument("no encodable clinical features".into()));
    }

    let mut patients: Vec<&RawClinical> = raw.iter().collect();
    patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    let mut table = ModalityTable::new("clinical", features.len());
    let mut excluded = Vec::new();
    'patients: for p in patients {
        let mut row = Vec::with_capacity(features.len());
        for key in &features {
            let (reason, value) = match p.values.get(key) {
                None => ("missing key", None),
                Some(v) => ("unparsable value", encode_value(v)),
            };
            match value {
                Some(x) => row.push(x),
                None => {
                    let reason = match p.values.get(key) {
                        Some(RawValue::Missing) => "missing value".to_string(),
                        Some(RawValue::Text(s)) if s.trim().is_empty() => "missing value".to_string(),
                        Some(RawValue::Text(s)) => format!("{reason} {s:?}"),
                        _ => reason.to_string(),
                    };
                    excluded.push(Exclusion {
                        patient_id: p.patient_id.clone(),
                        key: key.clone(),
                        reason,
                    });
                    continue 'patients;
                }
            }
        }
        table.insert(p.patient_id.clone(), row)?;
    }
    if table.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "all {} clinical records were excluded",
            raw.len()
        )));
    }
    Ok(ClinicalEncoding {
        table,
        features,
        excluded,
    })
}
