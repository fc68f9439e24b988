use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a direction carries no variance.
const RANK_TOL: f64 = 1e-10;

/// Principal directions of a column-centred training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Variance along each component (divide-by-n), non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }
}

/// Fits the top-`k` principal components.
///
/// Uses the `d × d` covariance when `d ≤ n` and the `n × n` Gram matrix
/// otherwise (wide RNA-style inputs). Each component is sign-fixed so that
/// its largest-magnitude loading is positive.
pub fn fit_pca(x: ArrayView2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least 2 rows".into()));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "PCA with k={k} requires 1 <= k <= min(rows-1, cols) = {}",
            (n - 1).min(d)
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centred = &x - &mean.view().insert_axis(Axis(0));

    let (mut components, variances) = if d <= n {
        covariance_route(&centred, k)
    } else {
        gram_route(&centred, k)?
    };

    for mut row in components.axis_iter_mut(Axis(0)) {
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    let top = variances.first().copied().unwrap_or(0.0);
    let rank = variances
        .iter()
        .filter(|&&v| v > RANK_TOL * top.max(f64::MIN_POSITIVE))
        .count();
    if rank < k {
        log::warn!("PCA: numerical rank {rank} is below the requested {k} components");
    }

    Ok(PcaModel {
        mean: mean.to_vec(),
        components,
        explained_variance: variances,
    })
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, Vec<usize>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors, order)
}

fn covariance_route(centred: &Array2<f64>, k: usize) -> (Array2<f64>, Vec<f64>) {
    let (n, d) = centred.dim();
    let cov = centred.t().dot(centred) / n as f64;
    let (values, vectors, order) = sorted_eigen(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut comps = Array2::zeros((k, d));
    let mut vars = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        for j in 0..d {
            comps[[c, j]] = vectors[(j, idx)];
        }
        vars.push(values[idx].max(0.0));
    }
    (comps, vars)
}

fn gram_route(centred: &Array2<f64>, k: usize) -> Result<(Array2<f64>, Vec<f64>)> {
    let (n, d) = centred.dim();
    let gram = centred.dot(&centred.t());
    let (values, vectors, order) = sorted_eigen(DMatrix::from_fn(n, n, |i, j| gram[[i, j]]));
    let top = values[order[0]].max(f64::MIN_POSITIVE);

    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = values[idx];
        if lambda <= RANK_TOL * top {
            log::warn!(
                "PCA: data rank exhausted after {} components; returning fewer than {k}",
                rows.len()
            );
            break;
        }
        let u = Array1::from_iter((0..n).map(|i| vectors[(i, idx)]));
        let mut v = centred.t().dot(&u) / lambda.sqrt();
        // re-orthogonalize against accepted components
        for prev in &rows {
            let proj = prev.dot(&v);
            v.scaled_add(-proj, prev);
        }
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("degenerate principal direction".into()));
        }
        v /= norm;
        rows.push(v);
        vars.push(lambda / n as f64);
    }
    let mut comps = Array2::zeros((rows.len(), d));
    for (c, r) in rows.iter().enumerate() {
        comps.row_mut(c).assign(r);
    }
    Ok((comps, vars))
}

/// Projects `(x - mean)` onto the fitted components (`rows × k`).
pub fn apply_pca(pca: &PcaModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != pca.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "PCA input columns",
            expected: pca.input_dim(),
            actual: x.ncols(),
        });
    }
    let mean = Array1::from(pca.mean.clone());
    let centred = &x - &mean.view().insert_axis(Axis(0));
    Ok(centred.dot(&pca.components.t()))
}
