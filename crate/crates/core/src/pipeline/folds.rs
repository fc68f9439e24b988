use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::SurvivalRecord;
use crate::error::{Error, Result};

/// Patient → fold map, persisted and reused across experiments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.folds.get(patient_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, held_out)` positions of `ids` for fold `fold`.
    pub fn split<S: AsRef<str>>(&self, ids: &[S], fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if fold >= self.k {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} out of range for k={}",
                self.k
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            match self.fold_of(id.as_ref()) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "patient {} has no fold assignment",
                        id.as_ref()
                    )))
                }
            }
        }
        Ok((train, test))
    }

    /// Stable digest of the assignment, used to confirm reuse across runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.k.hash(&mut h);
        self.seed.hash(&mut h);
        self.folds.hash(&mut h);
        h.finish()
    }
}

/// Stratified k-fold split on the event indicator.
///
/// Each stratum is shuffled with the seed, then events followed by censored
/// patients are dealt round-robin in one continuous pass, so both the fold
/// sizes and the per-fold event counts differ by at most one.
pub fn stratified_kfold(records: &[SurvivalRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut sorted: Vec<&SurvivalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].patient_id == w[1].patient_id) {
        return Err(Error::DuplicatePatient(w[0].patient_id.clone()));
    }
    let (mut events, mut censored): (Vec<&SurvivalRecord>, Vec<&SurvivalRecord>) =
        sorted.into_iter().partition(|r| r.event);
    for (name, stratum) in [("event", &events), ("censored", &censored)] {
        if stratum.len() < k {
            return Err(Error::InvalidArgument(format!(
                "{name} stratum has {} patients, fewer than k={k}",
                stratum.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);
    let folds = events
        .iter()
        .chain(censored.iter())
        .enumerate()
        .map(|(i, r)| (r.patient_id.clone(), i % k))
        .collect();
    Ok(FoldAssignment { k, seed, folds })
}

/// Folds whose event count is more than one patient away from
/// `fold size × global event rate`, as `(fold, events, expected)`.
pub fn stratification_violations(assignment: &FoldAssignment, records: &[SurvivalRecord]) -> Vec<(usize, usize, f64)> {
    let mut sizes = vec![0usize; assignment.k];
    let mut events = vec![0usize; assignment.k];
    let mut total_events = 0;
    for r in records {
        if let Some(f) = assignment.fold_of(&r.patient_id) {
            sizes[f] += 1;
            events[f] += r.event as usize;
            total_events += r.event as usize;
        }
    }
    let n: usize = sizes.iter().sum();
    let rate = total_events as f64 / n.max(1) as f64;
    (0..assignment.k)
        .filter_map(|f| {
            let expected = sizes[f] as f64 * rate;
            ((events[f] as f64 - expected).abs() > 1.0 + 1e-12).then_some((f, events[f], expected))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n_events: usize, n_censored: usize) -> Vec<SurvivalRecord> {
        (0..n_events + n_censored)
            .map(|i| SurvivalRecord::new(format!("p{i:03}"), 1.0 + i as f64, i < n_events).unwrap())
            .collect()
    }

    fn events_per_fold(a: &FoldAssignment, recs: &[SurvivalRecord]) -> Vec<usize> {
        let mut out = vec![0; a.k];
        for r in recs.iter().filter(|r| r.event) {
            out[a.fold_of(&r.patient_id).unwrap()] += 1;
        }
        out
    }

    #[test]
    fn divisible_strata_are_exact() {
        let recs = records(10, 10);
        let a = stratified_kfold(&recs, 5, 3).unwrap();
        assert_eq!(events_per_fold(&a, &recs), vec![2; 5]);
        assert_eq!(a.fold_sizes(), vec![4; 5]);
    }

    #[test]
    fn discovery_set_counts() {
        let recs = records(27, 68);
        for seed in 0..20 {
            let a = stratified_kfold(&recs, 5, seed).unwrap();
            assert!(events_per_fold(&a, &recs).iter().all(|&e| e == 5 || e == 6));
            assert!(stratification_violations(&a, &recs).is_empty());
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let recs = records(15, 30);
        let a = stratified_kfold(&recs, 5, 11).unwrap();
        assert_eq!(a, stratified_kfold(&recs, 5, 11).unwrap());
        assert_ne!(a.folds, stratified_kfold(&recs, 5, 12).unwrap().folds);
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(a, stratified_kfold(&rev, 5, 11).unwrap());
        assert_eq!(a.fingerprint(), stratified_kfold(&rev, 5, 11).unwrap().fingerprint());
    }

    #[test]
    fn small_stratum_rejected() {
        assert!(stratified_kfold(&records(4, 20), 5, 0).is_err());
        assert!(stratified_kfold(&records(20, 4), 5, 0).is_err());
        assert!(stratified_kfold(&records(20, 20), 1, 0).is_err());
    }

    #[test]
    fn balance_holds_exhaustively() {
        for k in 2..=10 {
            for e in k..=40 {
                for c in (k..=40).step_by(3) {
                    let recs = records(e, c);
                    let a = stratified_kfold(&recs, k, (e * 100 + c) as u64).unwrap();
                    let v = stratification_violations(&a, &recs);
                    assert!(v.is_empty(), "k={k} e={e} c={c}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn split_partitions_ids() {
        let recs = records(10, 15);
        let a = stratified_kfold(&recs, 5, 0).unwrap();
        let ids: Vec<&str> = recs.iter().map(|r| r.patient_id.as_str()).collect();
        let mut seen = vec![0; ids.len()];
        for f in 0..5 {
            let (train, test) = a.split(&ids, f).unwrap();
            assert_eq!(train.len() + test.len(), ids.len());
            for i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert!(a.split(&["nobody"], 0).is_err());
    }
}
