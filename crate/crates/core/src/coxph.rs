//! Cox proportional-hazards baseline.
//!
//! Newton–Raphson on the Breslow partial log-likelihood with step-halving.
//! Inputs are expected to be standardized, matching what the deep model sees.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const LOGLIK_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;
/// Coefficients beyond this magnitude on standardized inputs signal separation.
const RUNAWAY_BETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    /// Ridge penalty `ridge/2 · ‖β‖²`; 0 disables it.
    pub ridge: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self { ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    /// Partial log-likelihood at `beta` (penalty included when ridge > 0).
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub ridge: f64,
    /// Objective after each accepted Newton step, starting at β = 0.
    pub trace: Vec<f64>,
}

/// Value, gradient and information matrix of the Breslow partial likelihood.
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub information: DMatrix<f64>,
}

/// Risk-set ordering: patient indices by descending time.
fn descending_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    order
}

/// Breslow partial log-likelihood and its first two derivatives at `beta`.
pub fn partial_likelihood(x: ArrayView2<f64>, times: &[f64], events: &[bool], beta: &[f64]) -> PartialLikelihood {
    let (n, d) = x.dim();
    let order = descending_order(times);
    let eta: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    // shift for numerical stability; cancels in the likelihood
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(d);
    let mut s2 = DMatrix::<f64>::zeros(d, d);
    let mut value = 0.0;
    let mut gradient = DVector::zeros(d);
    let mut information = DMatrix::zeros(d, d);

    let mut start = 0;
    while start < n {
        let t = times[order[start]];
        let mut end = start;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            let w = (eta[i] - shift).exp();
            s0 += w;
            for a in 0..d {
                s1[a] += w * x[[i, a]];
                for b in 0..=a {
                    s2[(a, b)] += w * x[[i, a]] * x[[i, b]];
                }
            }
        }
        let n_events = order[start..end].iter().filter(|&&i| events[i]).count();
        if n_events > 0 {
            let m = n_events as f64;
            let mean = &s1 / s0;
            value -= m * (s0.ln() + shift);
            for &i in &order[start..end] {
                if events[i] {
                    value += eta[i];
                    for a in 0..d {
                        gradient[a] += x[[i, a]];
                    }
                }
            }
            gradient -= m * &mean;
            for a in 0..d {
                for b in 0..=a {
                    let v = m * (s2[(a, b)] / s0 - mean[a] * mean[b]);
                    information[(a, b)] += v;
                    if a != b {
                        information[(b, a)] += v;
                    }
                }
            }
        }
        start = end;
    }
    PartialLikelihood {
        value,
        gradient,
        information,
    }
}

fn penalized(x: ArrayView2<f64>, times: &[f64], events: &[bool], beta: &[f64], ridge: f64) -> PartialLikelihood {
    let mut pl = partial_likelihood(x, times, events, beta);
    if ridge > 0.0 {
        let b = DVector::from_column_slice(beta);
        pl.value -= 0.5 * ridge * b.norm_squared();
        pl.gradient -= ridge * &b;
        for a in 0..beta.len() {
            pl.information[(a, a)] += ridge;
        }
    }
    pl
}

fn argmax_abs(v: &[f64]) -> usize {
    (0..v.len())
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0)
}

fn solve(information: &DMatrix<f64>, gradient: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = information.clone().cholesky() {
        return Ok(ch.solve(gradient));
    }
    information
        .clone()
        .lu()
        .solve(gradient)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularMatrix)
}

/// Fits a Cox model by Newton–Raphson from β = 0.
pub fn fit_coxph(x: ArrayView2<f64>, times: &[f64], events: &[bool], options: CoxOptions) -> Result<CoxModel> {
    let (n, d) = x.dim();
    if times.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch {
            context: "cox inputs",
            expected: n,
            actual: times.len().min(events.len()),
        });
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::InvalidArgument("Cox fit needs at least one event".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("Cox fit needs at least one covariate".into()));
    }
    for j in 0..d {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::InvalidArgument(format!("covariate {j} is constant")));
        }
    }
    let ridge = options.ridge;
    if ridge > 0.0 {
        log::warn!("Cox fit uses a ridge penalty of {ridge}");
    }

    let mut beta = vec![0.0; d];
    let mut current = penalized(x, times, events, &beta, ridge);
    let mut trace = vec![current.value];
    let mut iterations = 0;
    let mut converged = current.gradient.amax() < GRAD_TOL;

    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let step = solve(&current.information, &current.gradient)?;
        // predicted gain of the full Newton step
        let decrement = 0.5 * current.gradient.dot(&step);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let next = penalized(x, times, events, &candidate, ridge);
            if next.value.is_finite() && next.value > current.value {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            // no measurable ascent left: converged on the likelihood-change rule
            // when the Newton model agrees the remaining gain is negligible
            iterations -= 1;
            converged = decrement < LOGLIK_TOL;
            break;
        };
        let delta = next.value - current.value;
        beta = candidate;
        current = next;
        trace.push(current.value);

        if let Some(j) = beta.iter().position(|b| b.abs() > RUNAWAY_BETA) {
            return Err(Error::CoxSeparation {
                index: j,
                value: beta[j],
            });
        }
        converged = current.gradient.amax() < GRAD_TOL || (delta < LOGLIK_TOL && decrement < LOGLIK_TOL);
    }

    if !converged {
        let step = solve(&current.information, &current.gradient).ok();
        let idx = step
            .as_ref()
            .map(|s| argmax_abs(s.as_slice()))
            .unwrap_or_else(|| argmax_abs(&beta));
        return Err(Error::CoxNoConvergence { iterations, index: idx });
    }

    // Separation: the remaining Newton step is not negligible relative to β
    // even though the gradient vanished (information collapsing to zero).
    let step = solve(&current.information, &current.gradient)?;
    for j in 0..d {
        if step[j].abs() > 1e-3 * beta[j].abs().max(1.0) {
            return Err(Error::CoxSeparation {
                index: j,
                value: beta[j],
            });
        }
    }

    Ok(CoxModel {
        beta,
        log_likelihood: current.value,
        n_iterations: iterations,
        converged,
        ridge,
        trace,
    })
}

/// Linear predictor `X · β` (higher = earlier event).
pub fn cox_risk(model: &CoxModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.ncols() != model.beta.len() {
        return Err(Error::DimensionMismatch {
            context: "cox covariates",
            expected: model.beta.len(),
            actual: x.ncols(),
        });
    }
    Ok(x.dot(&Array1::from(model.beta.clone())))
}
