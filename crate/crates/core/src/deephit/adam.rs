use super::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deephit::{init_params, TrainConfig};

    fn tiny() -> ModelParams {
        let cfg = TrainConfig {
            embed_dim: 2,
            hidden_widths: vec![],
            n_bins: 2,
            ..TrainConfig::default()
        };
        init_params(&[1], &cfg, 3).unwrap()
    }

    #[test]
    fn first_step_by_hand() {
        let mut params = tiny();
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads.projections[0].weight[[0, 0]] = 0.3;
        grads.projections[0].weight[[1, 0]] = -2.0;
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 1e-3);
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        let d0 = params.projections[0].weight[[0, 0]] - before.projections[0].weight[[0, 0]];
        let d1 = params.projections[0].weight[[1, 0]] - before.projections[0].weight[[1, 0]];
        assert!((d0 + 1e-3 * 0.3 / (0.3 + 1e-8)).abs() < 1e-15);
        assert!((d1 - 1e-3 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(params.w_q, before.w_q);
    }

    #[test]
    fn second_step_by_hand() {
        let mut params = tiny();
        let w0 = params.projections[0].weight[[0, 0]];
        let mut state = AdamState::new(&params);
        let mut g = params.zeros_like();
        g.projections[0].weight[[0, 0]] = 1.0;
        adam_step(&mut params, &g, &mut state, 0.1);
        g.projections[0].weight[[0, 0]] = -1.0;
        adam_step(&mut params, &g, &mut state, 0.1);
        let m = 0.9 * 0.1 + 0.1 * -1.0;
        let v = 0.999 * 0.001 + 0.001;
        let step2 = 0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let expect = w0 - 0.1 * 1.0 / (1.0 + 1e-8) - step2;
        assert!((params.projections[0].weight[[0, 0]] - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = tiny();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            adam_step(&mut params, &grads, &mut state, 1e-2);
        }
        assert_eq!(params, before);
    }
}
