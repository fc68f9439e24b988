use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Cohort, ModalityTable, SurvivalRecord};
use crate::error::{Error, Result};

/// How one modality embeds the latent factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModality {
    pub name: String,
    /// Latent factors carried by this modality.
    pub factors: Vec<usize>,
    /// Noisy copies per carried factor.
    pub copies: usize,
    pub noise_sd: f64,
    /// Pure-noise columns appended after the copies.
    pub distractors: usize,
}

/// Latent risk `r = Σ linear[f]·z_f + Σ w·z_a·z_b` over standard normal factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_factors: usize,
    pub linear: Vec<f64>,
    pub interactions: Vec<(usize, usize, f64)>,
    pub modalities: Vec<SyntheticModality>,
    /// Median-scale of event times in months at `r = 0`.
    pub base_time: f64,
}

fn modality(name: &str, factors: Vec<usize>, distractors: usize) -> SyntheticModality {
    SyntheticModality {
        name: name.into(),
        copies: if factors.is_empty() { 0 } else { 3 },
        factors,
        noise_sd: 0.3,
        distractors,
    }
}

impl Default for SyntheticSpec {
    /// Two signal modalities holding two factors each, one noise modality.
    fn default() -> Self {
        Self {
            n_factors: 4,
            linear: vec![1.3, 1.3, 1.3, 1.3],
            interactions: vec![(0, 2, 1.3)],
            modalities: vec![
                modality("signal_a", vec![0, 1], 6),
                modality("signal_b", vec![2, 3], 6),
                modality("noise", vec![], 12),
            ],
            base_time: 30.0,
        }
    }
}

impl SyntheticSpec {
    /// Risk dominated by a single cross-modality product term.
    pub fn interaction() -> Self {
        Self {
            n_factors: 2,
            linear: vec![0.2, 0.2],
            interactions: vec![(0, 1, 2.5)],
            modalities: vec![modality("signal_a", vec![0], 4), modality("signal_b", vec![1], 4)],
            base_time: 30.0,
        }
    }

    /// Purely additive risk over the same layout as [`SyntheticSpec::interaction`].
    pub fn linear() -> Self {
        Self {
            linear: vec![1.2, 1.2],
            interactions: Vec::new(),
            ..Self::interaction()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.linear.len() != self.n_factors {
            return bad(format!(
                "{} linear weights for {} factors",
                self.linear.len(),
                self.n_factors
            ));
        }
        if self
            .interactions
            .iter()
            .any(|&(a, b, _)| a >= self.n_factors || b >= self.n_factors)
        {
            return bad("interaction refers to an unknown factor".into());
        }
        if self.modalities.is_empty() {
            return bad("no modalities".into());
        }
        for m in &self.modalities {
            if m.factors.iter().any(|&f| f >= self.n_factors) {
                return bad(format!("modality `{}` refers to an unknown factor", m.name));
            }
            if m.factors.len() * m.copies + m.distractors == 0 {
                return bad(format!("modality `{}` has no columns", m.name));
            }
            if !(m.noise_sd >= 0.0) {
                return bad(format!("modality `{}` has a negative noise level", m.name));
            }
        }
        if !(self.base_time > 0.0) {
            return bad("base_time must be positive".into());
        }
        Ok(())
    }

    pub fn risk(&self, z: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(z).map(|(w, v)| w * v).sum();
        let inter: f64 = self.interactions.iter().map(|&(a, b, w)| w * z[a] * z[b]).sum();
        lin + inter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// True latent risk per record, in cohort order.
    pub oracle_risk: Vec<f64>,
}

fn censored_fraction(times: &[f64], draws: &[f64], scale: f64) -> f64 {
    times.iter().zip(draws).filter(|(&t, &u)| u * scale < t).count() as f64 / times.len() as f64
}

/// Simulated multimodal cohort with exponential event times of rate `exp(r)`.
///
/// Censoring times are `u · c` with `u ~ U(0, 1]` and `c` found by bisection so
/// the censored share is as close to `censor_rate` as the sample allows.
pub fn generate_synthetic_cohort(
    n: usize,
    spec: &SyntheticSpec,
    censor_rate: f64,
    seed: u64,
) -> Result<SyntheticCohort> {
    if n < 20 {
        return Err(Error::InvalidArgument(format!("n must be at least 20, got {n}")));
    }
    if !(0.0..1.0).contains(&censor_rate) {
        return Err(Error::InvalidArgument(format!(
            "censor_rate must lie in [0, 1), got {censor_rate}"
        )));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len();
    let ids: Vec<String> = (0..n).map(|i| format!("S{i:0width$}")).collect();

    let z: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.n_factors).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let risk: Vec<f64> = z.iter().map(|zi| spec.risk(zi)).collect();
    let event_times: Vec<f64> = risk
        .iter()
        .map(|r| {
            let e: f64 = Exp1.sample(&mut rng);
            (spec.base_time * e / r.exp()).max(1e-9)
        })
        .collect();
    let draws: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();

    let scale = if censor_rate == 0.0 {
        f64::INFINITY
    } else {
        let max_t = event_times.iter().cloned().fold(0.0, f64::max);
        let min_t = event_times.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_u = draws.iter().cloned().fold(1.0, f64::min);
        let (mut lo, mut hi) = ((min_t * 1e-3).ln(), (2.0 * max_t / min_u).ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if censored_fraction(&event_times, &draws, mid.exp()) > censor_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (
            censored_fraction(&event_times, &draws, lo.exp()),
            censored_fraction(&event_times, &draws, hi.exp()),
        );
        if (flo - censor_rate).abs() < (fhi - censor_rate).abs() {
            lo.exp()
        } else {
            hi.exp()
        }
    };

    let records = (0..n)
        .map(|i| {
            let c = draws[i] * scale;
            let t = event_times[i];
            SurvivalRecord::new(ids[i].clone(), t.min(c), t <= c)
        })
        .collect::<Result<Vec<_>>>()?;

    let modalities = spec
        .modalities
        .iter()
        .map(|m| {
            let dim = m.factors.len() * m.copies + m.distractors;
            let mut table = ModalityTable::new(m.name.clone(), dim);
            for (i, id) in ids.iter().enumerate() {
                let mut row = Vec::with_capacity(dim);
                for &f in &m.factors {
                    for _ in 0..m.copies {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        row.push(z[i][f] + m.noise_sd * e);
                    }
                }
                for _ in 0..m.distractors {
                    row.push(StandardNormal.sample(&mut rng));
                }
                table.insert(id.clone(), row)?;
            }
            Ok(table)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticCohort {
        cohort: Cohort { records, modalities },
        oracle_risk: risk,
    })
}
