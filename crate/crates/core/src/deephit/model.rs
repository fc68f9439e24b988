use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::survcore::Pmf;

/// Fixed inverted-dropout masks for each hidden layer (`n × width`,
/// entries 0 or `1 / (1 - rate)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(pub Vec<Array2<f64>>);

impl DropoutMasks {
    pub fn sample(rng: &mut ChaCha8Rng, n: usize, widths: &[usize], rate: f64) -> Self {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        DropoutMasks(
            widths
                .iter()
                .map(|&w| Array2::from_shape_simple_fn((n, w), || if rng.random::<f64>() < keep { scale } else { 0.0 }))
                .collect(),
        )
    }
}

/// Output of attention fusion for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    /// Row-wise concatenation of the attended embeddings, length `M · P`.
    pub output: Array1<f64>,
    /// Row-stochastic attention matrix, `M × M`.
    pub attention: Array2<f64>,
}

/// `max(0, W x + b)`.
pub fn project_modality(x: ArrayView1<f64>, weight: ArrayView2<f64>, bias: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != weight.ncols() {
        return Err(Error::DimensionMismatch {
            context: "modality projection input",
            expected: weight.ncols(),
            actual: x.len(),
        });
    }
    if bias.len() != weight.nrows() {
        return Err(Error::DimensionMismatch {
            context: "modality projection bias",
            expected: weight.nrows(),
            actual: bias.len(),
        });
    }
    Ok((weight.dot(&x) + bias).mapv(relu))
}

/// Scaled dot-product attention over the `M` modality embeddings of one patient.
pub fn cross_attention_fuse(embeddings: ArrayView2<f64>, params: &ModelParams) -> Result<Fused> {
    let (m, p) = embeddings.dim();
    if m == 0 {
        return Err(Error::InvalidArgument("attention needs at least one embedding".into()));
    }
    if p != params.embed_dim() {
        return Err(Error::DimensionMismatch {
            context: "attention embedding width",
            expected: params.embed_dim(),
            actual: p,
        });
    }
    let q = embeddings.dot(&params.w_q);
    let k = embeddings.dot(&params.w_k);
    let v = embeddings.dot(&params.w_v);
    let mut attention = q.dot(&k.t()) / (p as f64).sqrt();
    for mut row in attention.axis_iter_mut(Axis(0)) {
        softmax_inplace(row.as_slice_mut().expect("contiguous row"));
    }
    let out = attention.dot(&v);
    Ok(Fused {
        output: Array1::from_iter(out.iter().copied()),
        attention,
    })
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub(crate) fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub n: usize,
    pub m: usize,
    /// Projection pre-activations per modality, `n × P`.
    pub proj_pre: Vec<Array2<f64>>,
    /// Embeddings stacked sample-major, row `i·M + m`; `(n·M) × P`.
    pub emb: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Attention matrices, `n × M × M`.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated attention outputs, `n × (M·P)`.
    pub fused: Array2<f64>,
    pub hidden_pre: Vec<Array2<f64>>,
    /// Post-ReLU, post-dropout activations of each hidden layer.
    pub hidden_out: Vec<Array2<f64>>,
    pub pmf: Array2<f64>,
}

fn check_inputs(inputs: &[ArrayView2<f64>], params: &ModelParams) -> Result<usize> {
    if inputs.len() != params.projections.len() {
        return Err(Error::DimensionMismatch {
            context: "number of modalities",
            expected: params.projections.len(),
            actual: inputs.len(),
        });
    }
    let n = inputs.first().map(|x| x.nrows()).unwrap_or(0);
    for (x, proj) in inputs.iter().zip(&params.projections) {
        if x.ncols() != proj.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "modality feature width",
                expected: proj.in_dim(),
                actual: x.ncols(),
            });
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "patients per modality",
                expected: n,
                actual: x.nrows(),
            });
        }
    }
    Ok(n)
}

pub(crate) fn forward_cached(
    inputs: &[ArrayView2<f64>],
    params: &ModelParams,
    masks: Option<&DropoutMasks>,
) -> Result<ForwardCache> {
    let n = check_inputs(inputs, params)?;
    let m = inputs.len();
    let p = params.embed_dim();
    if let Some(ms) = masks {
        if ms.0.len() != params.hidden.len()
            || ms
                .0
                .iter()
                .zip(&params.hidden)
                .any(|(mask, l)| mask.dim() != (n, l.out_dim()))
        {
            return Err(Error::InvalidArgument("dropout masks do not match the batch".into()));
        }
    }

    let mut proj_pre = Vec::with_capacity(m);
    let mut emb = Array2::zeros((n * m, p));
    for (j, (x, proj)) in inputs.iter().zip(&params.projections).enumerate() {
        let pre = x.dot(&proj.weight.t()) + &proj.bias;
        for i in 0..n {
            emb.row_mut(i * m + j).assign(&pre.row(i).mapv(relu));
        }
        proj_pre.push(pre);
    }

    let q = emb.dot(&params.w_q);
    let k = emb.dot(&params.w_k);
    let v = emb.dot(&params.w_v);
    let scale = 1.0 / (p as f64).sqrt();
    let mut attn = Vec::with_capacity(n);
    let mut attended = Array2::zeros((n * m, p));
    for i in 0..n {
        let rows = s![i * m..(i + 1) * m, ..];
        let mut a = q.slice(rows).dot(&k.slice(rows).t()) * scale;
        for mut row in a.axis_iter_mut(Axis(0)) {
            softmax_inplace(row.as_slice_mut().expect("contiguous row"));
        }
        attended.slice_mut(rows).assign(&a.dot(&v.slice(rows)));
        attn.push(a);
    }
    let fused = attended
        .into_shape_with_order((n, m * p))
        .expect("sample-major rows are contiguous");

    let mut hidden_pre = Vec::with_capacity(params.hidden.len());
    let mut hidden_out: Vec<Array2<f64>> = Vec::with_capacity(params.hidden.len());
    for (l, layer) in params.hidden.iter().enumerate() {
        let input = if l == 0 { &fused } else { &hidden_out[l - 1] };
        let pre = input.dot(&layer.weight.t()) + &layer.bias;
        let mut out = pre.mapv(relu);
        if let Some(ms) = masks {
            out *= &ms.0[l];
        }
        hidden_pre.push(pre);
        hidden_out.push(out);
    }
    let last = hidden_out.last().unwrap_or(&fused);
    let mut pmf = last.dot(&params.output.weight.t()) + &params.output.bias;
    for mut row in pmf.axis_iter_mut(Axis(0)) {
        softmax_inplace(row.as_slice_mut().expect("contiguous row"));
    }

    Ok(ForwardCache {
        n,
        m,
        proj_pre,
        emb,
        q,
        k,
        v,
        attn,
        fused,
        hidden_pre,
        hidden_out,
        pmf,
    })
}

/// Batched forward pass; returns the `n × K` PMF matrix.
pub fn forward_batch(
    inputs: &[ArrayView2<f64>],
    params: &ModelParams,
    masks: Option<&DropoutMasks>,
) -> Result<Array2<f64>> {
    forward_cached(inputs, params, masks).map(|c| c.pmf)
}

/// Inference-mode PMFs for a batch of patients.
pub fn predict_pmfs(inputs: &[ArrayView2<f64>], params: &ModelParams) -> Result<Vec<Pmf>> {
    let pmf = forward_batch(inputs, params, None)?;
    pmf.axis_iter(Axis(0)).map(|r| Pmf::new(r.to_vec())).collect()
}

/// Forward pass for one patient. Dropout is applied only when a training
/// RNG is supplied.
pub fn forward(
    features: &[ArrayView1<f64>],
    params: &ModelParams,
    config: &TrainConfig,
    training: Option<&mut ChaCha8Rng>,
) -> Result<Pmf> {
    let inputs: Vec<ArrayView2<f64>> = features.iter().map(|x| x.view().insert_axis(Axis(0))).collect();
    let masks = match training {
        Some(rng) if config.dropout > 0.0 => {
            Some(DropoutMasks::sample(rng, 1, &params.hidden_widths(), config.dropout))
        }
        _ => None,
    };
    let pmf = forward_batch(&inputs, params, masks.as_ref())?;
    Pmf::new(pmf.row(0).to_vec())
}
