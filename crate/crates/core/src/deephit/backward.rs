use ndarray::{s, Array2, Axis};

use super::loss::loss_from_pmf;
use super::model::{forward_cached, DropoutMasks};
use super::{Batch, LossBreakdown, ModelParams, TrainConfig};
use crate::error::Result;

/// Gradient of [`super::total_loss`] with respect to every parameter tensor.
pub fn gradient(batch: &Batch, params: &ModelParams, config: &TrainConfig) -> Result<(LossBreakdown, ModelParams)> {
    gradient_with_masks(batch, params, config, None)
}

/// Reverse-mode gradient with dropout masks held fixed.
pub fn gradient_with_masks(
    batch: &Batch,
    params: &ModelParams,
    config: &TrainConfig,
    masks: Option<&DropoutMasks>,
) -> Result<(LossBreakdown, ModelParams)> {
    batch.check()?;
    let cache = forward_cached(&batch.views(), params, masks)?;
    let (loss, d_pmf) = loss_from_pmf(cache.pmf.view(), &batch.bins, &batch.events, params, config, true);
    let d_pmf = d_pmf.expect("gradient requested");
    let mut grads = params.zeros_like();
    let (n, m, p) = (cache.n, cache.m, params.embed_dim());

    // softmax: dz = p ⊙ (dp - <dp, p>)
    let inner = (&d_pmf * &cache.pmf).sum_axis(Axis(1)).insert_axis(Axis(1));
    let mut d_act = &cache.pmf * &(&d_pmf - &inner);

    // output layer and hidden stack, top-down
    let n_hidden = params.hidden.len();
    for l in (0..=n_hidden).rev() {
        let input = if l == 0 { &cache.fused } else { &cache.hidden_out[l - 1] };
        let layer = if l == n_hidden {
            &params.output
        } else {
            &params.hidden[l]
        };
        let g = if l == n_hidden {
            &mut grads.output
        } else {
            &mut grads.hidden[l]
        };
        g.weight = d_act.t().dot(input);
        g.bias = d_act.sum_axis(Axis(0));
        let mut d_input = d_act.dot(&layer.weight);
        if l > 0 {
            // back through dropout and ReLU of hidden layer l-1
            if let Some(ms) = masks {
                d_input *= &ms.0[l - 1];
            }
            d_input.zip_mut_with(&cache.hidden_pre[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        d_act = d_input;
    }

    // d_act is now ∂/∂fused, n × (M·P); reshape to stacked attention outputs
    let d_out = d_act
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * m, p))
        .expect("contiguous");
    let scale = 1.0 / (p as f64).sqrt();
    let mut d_q = Array2::zeros((n * m, p));
    let mut d_k = Array2::zeros((n * m, p));
    let mut d_v = Array2::zeros((n * m, p));
    for i in 0..n {
        let rows = s![i * m..(i + 1) * m, ..];
        let a = &cache.attn[i];
        let d_o = d_out.slice(rows);
        let d_a = d_o.dot(&cache.v.slice(rows).t());
        d_v.slice_mut(rows).assign(&a.t().dot(&d_o));
        // row softmax backward
        let inner = (&d_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let d_s = a * &(&d_a - &inner) * scale;
        d_q.slice_mut(rows).assign(&d_s.dot(&cache.k.slice(rows)));
        d_k.slice_mut(rows).assign(&d_s.t().dot(&cache.q.slice(rows)));
    }
    grads.w_q = cache.emb.t().dot(&d_q);
    grads.w_k = cache.emb.t().dot(&d_k);
    grads.w_v = cache.emb.t().dot(&d_v);
    let d_emb = d_q.dot(&params.w_q.t()) + d_k.dot(&params.w_k.t()) + d_v.dot(&params.w_v.t());

    let inputs = batch.views();
    for j in 0..m {
        let mut d_pre = Array2::zeros((n, p));
        for i in 0..n {
            d_pre.row_mut(i).assign(&d_emb.row(i * m + j));
        }
        d_pre.zip_mut_with(&cache.proj_pre[j], |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let g = &mut grads.projections[j];
        g.weight = d_pre.t().dot(&inputs[j]);
        g.bias = d_pre.sum_axis(Axis(0));
        if config.l2_projection > 0.0 {
            g.weight
                .scaled_add(2.0 * config.l2_projection, &params.projections[j].weight);
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deephit::{init_params, total_loss_with_masks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(seed: u64, dropout: f64) -> (Batch, ModelParams, TrainConfig, Option<DropoutMasks>) {
        let cfg = TrainConfig {
            embed_dim: 5,
            hidden_widths: vec![6, 4],
            n_bins: 4,
            dropout,
            l2_projection: 0.01,
            alpha_rank: 0.5,
            sigma_rank: 0.5,
            ..TrainConfig::default()
        };
        let mut params = init_params(&[3, 4], &cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        // zero biases would put dead ReLUs exactly on the kink
        for l in params.projections.iter_mut().chain(params.hidden.iter_mut()) {
            l.bias.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z + 0.05
            });
        }
        let inputs = vec![
            Array2::from_shape_simple_fn((6, 3), || StandardNormal.sample(&mut rng)),
            Array2::from_shape_simple_fn((6, 4), || StandardNormal.sample(&mut rng)),
        ];
        let batch = Batch {
            inputs,
            bins: vec![0, 2, 1, 3, 1, 2],
            events: vec![true, true, false, true, false, true],
        };
        let masks = (dropout > 0.0).then(|| DropoutMasks::sample(&mut rng, 6, &cfg.hidden_widths, dropout));
        (batch, params, cfg, masks)
    }

    fn max_rel_error(batch: &Batch, params: &ModelParams, cfg: &TrainConfig, masks: Option<&DropoutMasks>) -> f64 {
        let (_, grads) = gradient_with_masks(batch, params, cfg, masks).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let n_tensors = analytic.len();
        for t in 0..n_tensors {
            for e in 0..analytic[t].len() {
                let mut plus = params.clone();
                plus.tensors_mut()[t][e] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[t][e] -= h;
                let fp = total_loss_with_masks(batch, &plus, cfg, masks).unwrap().total;
                let fm = total_loss_with_masks(batch, &minus, cfg, masks).unwrap().total;
                let fd = (fp - fm) / (2.0 * h);
                let a = analytic[t][e];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn matches_finite_differences() {
        for seed in 0..3 {
            let (batch, params, cfg, _) = toy(seed, 0.0);
            let err = max_rel_error(&batch, &params, &cfg, None);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn matches_finite_differences_with_fixed_dropout() {
        let (batch, params, cfg, masks) = toy(7, 0.3);
        let err = max_rel_error(&batch, &params, &cfg, masks.as_ref());
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_loss_configuration_has_tiny_gradient() {
        let (mut batch, mut params, mut cfg, _) = toy(1, 0.0);
        cfg.alpha_rank = 0.0;
        cfg.l2_projection = 0.0;
        // saturate the output layer so every pmf is one-hot on bin 2
        params.output.weight.fill(0.0);
        params.output.bias.fill(-40.0);
        params.output.bias[2] = 40.0;
        batch.bins = vec![2; 6];
        batch.events = vec![true; 6];
        let (loss, grads) = gradient(&batch, &params, &cfg).unwrap();
        assert!(loss.total < 1e-12);
        let max = grads
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(max < 1e-12, "max gradient {max}");
    }

    #[test]
    fn l2_contribution_is_linear_in_coefficient() {
        let (batch, params, mut cfg, _) = toy(4, 0.0);
        cfg.l2_projection = 0.01;
        let (_, g1) = gradient(&batch, &params, &cfg).unwrap();
        cfg.l2_projection = 0.02;
        let (_, g2) = gradient(&batch, &params, &cfg).unwrap();
        cfg.l2_projection = 0.0;
        let (_, g0) = gradient(&batch, &params, &cfg).unwrap();
        for m in 0..2 {
            let pen1 = &g1.projections[m].weight - &g0.projections[m].weight;
            let pen2 = &g2.projections[m].weight - &g0.projections[m].weight;
            for (a, b) in pen1.iter().zip(pen2.iter()) {
                assert!((2.0 * a - b).abs() < 1e-12);
            }
            let expect = &params.projections[m].weight * 0.02;
            for (a, b) in pen1.iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // biases carry no penalty
        assert_eq!(g1.projections[0].bias, g0.projections[0].bias);
    }
}
