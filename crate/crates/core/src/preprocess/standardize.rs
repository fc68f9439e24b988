use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose standard deviation falls below this are treated as constant.
pub const CONSTANT_STD: f64 = 1e-12;

/// Per-column z-score transform fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn is_constant(&self, col: usize) -> bool {
        self.stds[col] < CONSTANT_STD
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.is_constant(j)).collect()
    }

    /// Maps standardized values back to the original scale.
    pub fn invert(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_cols(self.dim(), z.ncols())?;
        let mut out = z.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            let s = if self.is_constant(j) { 0.0 } else { s };
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }
}

fn check_cols(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context: "standardizer columns",
            expected,
            actual,
        });
    }
    Ok(())
}

pub fn fit_standardizer(x: ArrayView2<f64>) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardizer needs at least 2 rows, got {n}"
        )));
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.axis_iter(Axis(1)) {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        means.push(mean);
        stds.push(var.sqrt());
    }
    Ok(Standardizer { means, stds })
}

/// `(x - mean) / std` per column; constant columns map to 0.
pub fn apply_standardizer(std: &Standardizer, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_cols(std.dim(), x.ncols())?;
    let mut out = x.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        if std.is_constant(j) {
            col.fill(0.0);
        } else {
            let (m, s) = (std.means[j], std.stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
    Ok(out)
}
