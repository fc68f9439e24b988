use ndarray::{Array2, ArrayView2, Axis};

use super::model::DropoutMasks;
use super::{Batch, ModelParams, TrainConfig};
use crate::error::Result;
use crate::survcore::Pmf;

/// Probabilities are clamped to at least this before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

/// The three terms of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub nll: f64,
    pub ranking: f64,
    pub l2: f64,
    pub total: f64,
}

fn tail_mass(p: &[f64], bin: usize) -> f64 {
    p[bin + 1..].iter().sum()
}

/// Discrete-time negative log-likelihood of one patient.
///
/// An event in `bin` scores `-log p[bin]`; a patient censored in `bin` is
/// assumed to survive past it and scores `-log Σ_{j > bin} p[j]`.
pub fn nll_loss(pmf: &Pmf, bin: usize, event: bool) -> f64 {
    let p = pmf.probs();
    let mass = if event { p[bin] } else { tail_mass(p, bin) };
    -mass.max(PROB_FLOOR).ln()
}

/// Pairwise ranking penalty.
///
/// Over pairs with `events[i]` and `bins[i] < bins[j]`, the mean of
/// `exp(-(F_i(b_i) - F_j(b_i)) / sigma)` with `F` the cumulative incidence.
pub fn ranking_loss(pmfs: &[Pmf], bins: &[usize], events: &[bool], sigma: f64) -> f64 {
    let rows: Vec<Vec<f64>> = pmfs.iter().map(|p| p.probs().to_vec()).collect();
    let k = rows.first().map(Vec::len).unwrap_or(0);
    let flat = Array2::from_shape_vec((rows.len(), k), rows.concat()).expect("equal lengths");
    ranking_terms(flat.view(), bins, events, sigma, None)
}

fn cumulative(pmf: ArrayView2<f64>) -> Array2<f64> {
    let mut cdf = pmf.to_owned();
    cdf.accumulate_axis_inplace(Axis(1), |&prev, cur| *cur += prev);
    cdf
}

/// Ranking loss; when `grad` is given, adds `scale · ∂loss/∂pmf` into it.
fn ranking_terms(
    pmf: ArrayView2<f64>,
    bins: &[usize],
    events: &[bool],
    sigma: f64,
    grad: Option<(&mut Array2<f64>, f64)>,
) -> f64 {
    let n = pmf.nrows();
    let cdf = cumulative(pmf);
    let n_pairs = (0..n)
        .filter(|&i| events[i])
        .map(|i| (0..n).filter(|&j| bins[i] < bins[j]).count())
        .sum::<usize>();
    if n_pairs == 0 {
        return 0.0;
    }
    let inv = 1.0 / n_pairs as f64;
    let mut total = 0.0;
    // ∂loss/∂F_i(b), later spread over p_i[k] for k ≤ b
    let mut d_cdf = grad.is_some().then(|| Array2::<f64>::zeros(pmf.raw_dim()));
    for i in (0..n).filter(|&i| events[i]) {
        let b = bins[i];
        let fi = cdf[[i, b]];
        for j in (0..n).filter(|&j| b < bins[j]) {
            let term = (-(fi - cdf[[j, b]]) / sigma).exp();
            total += term;
            if let Some(d) = d_cdf.as_mut() {
                let g = term * inv / sigma;
                d[[i, b]] -= g;
                d[[j, b]] += g;
            }
        }
    }
    if let (Some((out, scale)), Some(mut d)) = (grad, d_cdf) {
        // reverse cumulative sum: ∂/∂p[k] = Σ_{b ≥ k} ∂/∂F(b)
        d.invert_axis(Axis(1));
        d.accumulate_axis_inplace(Axis(1), |&prev, cur| *cur += prev);
        d.invert_axis(Axis(1));
        out.scaled_add(scale, &d);
    }
    total * inv
}

/// Mean NLL and its gradient with respect to the PMF matrix.
fn nll_terms(pmf: ArrayView2<f64>, bins: &[usize], events: &[bool], grad: Option<&mut Array2<f64>>) -> f64 {
    let n = pmf.nrows();
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for i in 0..n {
        let row = pmf.row(i);
        let p = row.as_slice().expect("contiguous pmf row");
        let b = bins[i];
        let mass = if events[i] { p[b] } else { tail_mass(p, b) };
        total -= mass.max(PROB_FLOOR).ln();
        if let Some(g) = grad.as_deref_mut() {
            if mass > PROB_FLOOR {
                let d = -inv / mass;
                if events[i] {
                    g[[i, b]] += d;
                } else {
                    for k in b + 1..p.len() {
                        g[[i, k]] += d;
                    }
                }
            }
        }
    }
    total * inv
}

/// Loss from a PMF matrix plus optional `∂loss/∂pmf` (L2 term excluded from the gradient).
pub(crate) fn loss_from_pmf(
    pmf: ArrayView2<f64>,
    bins: &[usize],
    events: &[bool],
    params: &ModelParams,
    config: &TrainConfig,
    want_grad: bool,
) -> (LossBreakdown, Option<Array2<f64>>) {
    let mut grad = want_grad.then(|| Array2::zeros(pmf.raw_dim()));
    let nll = nll_terms(pmf, bins, events, grad.as_mut());
    let ranking = if config.alpha_rank > 0.0 {
        ranking_terms(
            pmf,
            bins,
            events,
            config.sigma_rank,
            grad.as_mut().map(|g| (g, config.alpha_rank)),
        )
    } else {
        0.0
    };
    let l2 = config.l2_projection * params.projection_sq_norm();
    let total = nll + config.alpha_rank * ranking + l2;
    (
        LossBreakdown {
            nll,
            ranking,
            l2,
            total,
        },
        grad,
    )
}

/// `mean NLL + alpha · ranking + l2 · Σ‖W_m‖²`, without dropout.
pub fn total_loss(batch: &Batch, params: &ModelParams, config: &TrainConfig) -> Result<LossBreakdown> {
    total_loss_with_masks(batch, params, config, None)
}

/// As [`total_loss`] with fixed dropout masks on the hidden layers.
pub fn total_loss_with_masks(
    batch: &Batch,
    params: &ModelParams,
    config: &TrainConfig,
    masks: Option<&DropoutMasks>,
) -> Result<LossBreakdown> {
    batch.check()?;
    let pmf = super::forward_batch(&batch.views(), params, masks)?;
    Ok(loss_from_pmf(pmf.view(), &batch.bins, &batch.events, params, config, false).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deephit::init_params;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pmf(v: Vec<f64>) -> Pmf {
        Pmf::new(v).unwrap()
    }

    fn random_pmf(rng: &mut ChaCha8Rng, k: usize) -> Pmf {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        pmf(raw.iter().map(|v| v / s).collect())
    }

    #[test]
    fn nll_examples() {
        let one_hot = pmf(vec![0.0, 1.0, 0.0]);
        assert!(nll_loss(&one_hot, 1, true).abs() < 1e-12);
        let any = pmf(vec![0.2, 0.3, 0.5]);
        assert!((nll_loss(&any, 2, false) - (-(1e-7f64).ln())).abs() < 1e-12);
        let uniform = pmf(vec![1.0 / 30.0; 30]);
        assert!((nll_loss(&uniform, 14, false) - 2f64.ln()).abs() < 1e-12);
        assert!((nll_loss(&any, 0, false) - -(0.8f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ranking_examples() {
        let a = pmf(vec![1.0, 0.0, 0.0]);
        let b = pmf(vec![0.0, 0.0, 1.0]);
        assert_eq!(
            ranking_loss(&[a.clone(), b.clone()], &[0, 2], &[false, false], 1.0),
            0.0
        );
        let v = ranking_loss(&[a, b], &[0, 2], &[true, false], 1.0);
        assert!((v - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ranking_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let pmfs: Vec<Pmf> = (0..5).map(|_| random_pmf(&mut rng, 6)).collect();
            let bins: Vec<usize> = (0..5).map(|_| rng.random_range(0..6)).collect();
            let events: Vec<bool> = (0..5).map(|_| rng.random::<bool>()).collect();
            let sigma = 0.1;
            let (mut sum, mut count) = (0.0, 0usize);
            for i in 0..5 {
                for j in 0..5 {
                    if events[i] && bins[i] < bins[j] {
                        let fi: f64 = pmfs[i].probs()[..=bins[i]].iter().sum();
                        let fj: f64 = pmfs[j].probs()[..=bins[i]].iter().sum();
                        sum += (-(fi - fj) / sigma).exp();
                        count += 1;
                    }
                }
            }
            let expect = if count == 0 { 0.0 } else { sum / count as f64 };
            let got = ranking_loss(&pmfs, &bins, &events, sigma);
            assert!((got - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    fn toy_batch(seed: u64) -> (Batch, ModelParams, TrainConfig) {
        let cfg = TrainConfig {
            embed_dim: 6,
            hidden_widths: vec![5],
            n_bins: 4,
            ..TrainConfig::default()
        };
        let params = init_params(&[3, 2], &cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let inputs = vec![
            Array2::from_shape_simple_fn((6, 3), || StandardNormal.sample(&mut rng)),
            Array2::from_shape_simple_fn((6, 2), || StandardNormal.sample(&mut rng)),
        ];
        let batch = Batch {
            inputs,
            bins: vec![0, 1, 3, 2, 1, 0],
            events: vec![true, false, true, false, true, true],
        };
        (batch, params, cfg)
    }

    #[test]
    fn degenerate_weights_give_mean_nll() {
        let (batch, params, mut cfg) = toy_batch(1);
        cfg.alpha_rank = 0.0;
        cfg.l2_projection = 0.0;
        let l = total_loss(&batch, &params, &cfg).unwrap();
        let pmfs = super::super::predict_pmfs(&batch.views(), &params).unwrap();
        let mean: f64 = (0..6)
            .map(|i| nll_loss(&pmfs[i], batch.bins[i], batch.events[i]))
            .sum::<f64>()
            / 6.0;
        assert_eq!(l.total, l.nll);
        assert!((l.total - mean).abs() < 1e-14);
    }

    #[test]
    fn l2_term_is_hand_summed() {
        let (batch, mut params, mut cfg) = toy_batch(2);
        for p in &mut params.projections {
            p.weight.fill(0.5);
        }
        cfg.l2_projection = 0.01;
        let l = total_loss(&batch, &params, &cfg).unwrap();
        // 6×3 + 6×2 weights of 0.25 each
        assert!((l.l2 - 0.01 * 30.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn components_recombine() {
        let (batch, params, cfg) = toy_batch(3);
        let l = total_loss(&batch, &params, &cfg).unwrap();
        let pmfs = super::super::predict_pmfs(&batch.views(), &params).unwrap();
        let nll: f64 = (0..6)
            .map(|i| nll_loss(&pmfs[i], batch.bins[i], batch.events[i]))
            .sum::<f64>()
            / 6.0;
        let rank = ranking_loss(&pmfs, &batch.bins, &batch.events, cfg.sigma_rank);
        let mut sq = 0.0;
        for p in &params.projections {
            for w in p.weight.iter() {
                sq += w * w;
            }
        }
        let expect = nll + cfg.alpha_rank * rank + cfg.l2_projection * sq;
        assert!((l.total - expect).abs() < 1e-10);
    }
}
