use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

/// Dense layer, `y = W x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// One projection per modality, `embed_dim × d_m`.
    pub projections: Vec<Linear>,
    /// Attention maps, each `embed_dim × embed_dim`, applied as `E · W`.
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

/// Draws Glorot-uniform weights and zero biases; fully determined by `seed`.
pub fn init_params(modality_dims: &[usize], config: &TrainConfig, seed: u64) -> Result<ModelParams> {
    if modality_dims.is_empty() || modality_dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "modality dims must be nonempty and positive, got {modality_dims:?}"
        )));
    }
    let p = config.embed_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projections = modality_dims.iter().map(|&d| Linear::glorot(&mut rng, d, p)).collect();
    let attn_bound = (6.0 / (2 * p) as f64).sqrt();
    let mut square = || Array2::from_shape_simple_fn((p, p), || rng.random_range(-attn_bound..=attn_bound));
    let (w_q, w_k, w_v) = (square(), square(), square());

    let mut width = modality_dims.len() * p;
    let mut hidden = Vec::with_capacity(config.hidden_widths.len());
    for &h in &config.hidden_widths {
        hidden.push(Linear::glorot(&mut rng, width, h));
        width = h;
    }
    let output = Linear::glorot(&mut rng, width, config.n_bins);
    Ok(ModelParams {
        projections,
        w_q,
        w_k,
        w_v,
        hidden,
        output,
    })
}

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            projections: self.projections.iter().map(Linear::zeros_like).collect(),
            w_q: Array2::zeros(self.w_q.raw_dim()),
            w_k: Array2::zeros(self.w_k.raw_dim()),
            w_v: Array2::zeros(self.w_v.raw_dim()),
            hidden: self.hidden.iter().map(Linear::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    pub fn modality_dims(&self) -> Vec<usize> {
        self.projections.iter().map(Linear::in_dim).collect()
    }

    pub fn embed_dim(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.output.out_dim()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(Linear::out_dim).collect()
    }

    /// Tensor names in canonical order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for m in 0..self.projections.len() {
            names.push(format!("proj{m}.weight"));
            names.push(format!("proj{m}.bias"));
        }
        names.extend(["attn.w_q", "attn.w_k", "attn.w_v"].map(String::from));
        for l in 0..self.hidden.len() {
            names.push(format!("fc{l}.weight"));
            names.push(format!("fc{l}.bias"));
        }
        names.push("out.weight".into());
        names.push("out.bias".into());
        names
    }

    /// Shapes `(rows, cols)` in canonical order; biases have `cols = 1`.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let lin = |l: &Linear, s: &mut Vec<(usize, usize)>| {
            s.push(l.weight.dim());
            s.push((l.bias.len(), 1));
        };
        for p in &self.projections {
            lin(p, &mut shapes);
        }
        shapes.extend([self.w_q.dim(), self.w_k.dim(), self.w_v.dim()]);
        for h in &self.hidden {
            lin(h, &mut shapes);
        }
        lin(&self.output, &mut shapes);
        shapes
    }

    /// Read-only views of every tensor in canonical order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for p in &self.projections {
            out.push(p.weight.as_slice().expect("standard layout"));
            out.push(p.bias.as_slice().expect("standard layout"));
        }
        for w in [&self.w_q, &self.w_k, &self.w_v] {
            out.push(w.as_slice().expect("standard layout"));
        }
        for l in self.hidden.iter().chain(std::iter::once(&self.output)) {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// Mutable views of every tensor in canonical order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for p in &mut self.projections {
            out.push(p.weight.as_slice_mut().expect("standard layout"));
            out.push(p.bias.as_slice_mut().expect("standard layout"));
        }
        for w in [&mut self.w_q, &mut self.w_k, &mut self.w_v] {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        for l in self.hidden.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared projection weights (biases excluded).
    pub fn projection_sq_norm(&self) -> f64 {
        self.projections
            .iter()
            .map(|p| p.weight.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Rebuilds parameters from canonical-order tensors and shapes.
    pub fn from_tensors(
        n_modalities: usize,
        n_hidden: usize,
        tensors: Vec<((usize, usize), Vec<f64>)>,
    ) -> Result<Self> {
        let expected = 2 * n_modalities + 3 + 2 * n_hidden + 2;
        if tensors.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mat = |it: &mut std::vec::IntoIter<((usize, usize), Vec<f64>)>| -> Result<Array2<f64>> {
            let (shape, data) = it.next().expect("counted");
            Array2::from_shape_vec(shape, data).map_err(|e| Error::InvalidArgument(e.to_string()))
        };
        let lin = |it: &mut std::vec::IntoIter<((usize, usize), Vec<f64>)>| -> Result<Linear> {
            let weight = mat(it)?;
            let (shape, data) = it.next().expect("counted");
            if shape.1 != 1 || shape.0 != weight.nrows() || data.len() != shape.0 {
                return Err(Error::InvalidArgument(format!("bad bias shape {shape:?}")));
            }
            Ok(Linear {
                weight,
                bias: Array1::from(data),
            })
        };
        let projections = (0..n_modalities).map(|_| lin(&mut it)).collect::<Result<Vec<_>>>()?;
        let (w_q, w_k, w_v) = (mat(&mut it)?, mat(&mut it)?, mat(&mut it)?);
        let hidden = (0..n_hidden).map(|_| lin(&mut it)).collect::<Result<Vec<_>>>()?;
        let output = lin(&mut it)?;
        let params = Self {
            projections,
            w_q,
            w_k,
            w_v,
            hidden,
            output,
        };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let p = self.embed_dim();
        let bad = |what: &str| Err(Error::InvalidArgument(format!("inconsistent parameter shapes: {what}")));
        if self.w_q.dim() != (p, p) || self.w_k.dim() != (p, p) || self.w_v.dim() != (p, p) {
            return bad("attention");
        }
        if self.projections.iter().any(|l| l.out_dim() != p) {
            return bad("projection width");
        }
        let mut width = self.projections.len() * p;
        for l in self.hidden.iter().chain(std::iter::once(&self.output)) {
            if l.in_dim() != width {
                return bad("fully connected chain");
            }
            width = l.out_dim();
        }
        Ok(())
    }
}
