use super::TimeGrid;
use crate::error::{Error, Result};

/// Allowed deviation of a PMF's total mass from 1.
pub const PMF_TOLERANCE: f64 = 1e-6;

/// A validated probability mass function over time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty".into()));
        }
        if let Some((k, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidPmf(format!("entry {k} = {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Cumulative incidence `F(b) = Σ_{k ≤ b} p[k]`.
    pub fn cdf(&self, bin: usize) -> f64 {
        self.0[..=bin].iter().sum()
    }
}

/// Expected event time `Σ p[k] · midpoint[k]` (months).
pub fn expected_time(pmf: &Pmf, grid: &TimeGrid) -> Result<f64> {
    if pmf.len() != grid.n_bins() {
        return Err(Error::DimensionMismatch {
            context: "pmf vs time grid",
            expected: grid.n_bins(),
            actual: pmf.len(),
        });
    }
    let total: f64 = pmf.probs().iter().sum();
    let dot: f64 = pmf.probs().iter().zip(grid.midpoints()).map(|(p, m)| p * m).sum();
    Ok(dot / total)
}

/// Survival function `S[k] = 1 - Σ_{j ≤ k} p[j]`, evaluated as the
/// normalized tail mass so that `S[K-1]` is exactly 0.
pub fn survival_curve(pmf: &Pmf) -> Vec<f64> {
    let p = pmf.probs();
    let total: f64 = p.iter().sum();
    let mut out = vec![0.0; p.len()];
    let mut tail = 0.0;
    for k in (0..p.len()).rev() {
        out[k] = (tail / total).clamp(0.0, 1.0);
        tail += p[k];
    }
    out
}
