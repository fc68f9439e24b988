use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survcore::DEFAULT_BINS;

pub const DEFAULT_EMBED_DIM: usize = 128;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Number of time bins `K`.
    pub n_bins: usize,
    pub dropout: f64,
    pub l2_projection: f64,
    pub alpha_rank: f64,
    pub sigma_rank: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden_widths: Vec<usize>,
    /// Width of every modality projection.
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            n_bins: DEFAULT_BINS,
            dropout: 0.25,
            l2_projection: 1e-4,
            alpha_rank: 0.5,
            sigma_rank: 0.1,
            max_epochs: 200,
            patience: 10,
            hidden_widths: vec![128, 64],
            embed_dim: DEFAULT_EMBED_DIM,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Collects every invalid field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.n_bins < 2 {
            out.push(format!("n_bins must be >= 2, got {}", self.n_bins));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.l2_projection >= 0.0) {
            out.push(format!("l2_projection must be >= 0, got {}", self.l2_projection));
        }
        if !(self.alpha_rank >= 0.0) {
            out.push(format!("alpha_rank must be >= 0, got {}", self.alpha_rank));
        }
        if !(self.sigma_rank > 0.0) {
            out.push(format!("sigma_rank must be > 0, got {}", self.sigma_rank));
        }
        if self.max_epochs == 0 {
            out.push("max_epochs must be >= 1".into());
        }
        if self.embed_dim == 0 {
            out.push("embed_dim must be >= 1".into());
        }
        if self.hidden_widths.contains(&0) {
            out.push("hidden_widths entries must be >= 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.n_bins, 30);
        assert_eq!(c.embed_dim, 128);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn all_problems_reported() {
        let c = TrainConfig {
            dropout: 1.0,
            sigma_rank: 0.0,
            n_bins: 1,
            ..TrainConfig::default()
        };
        assert_eq!(c.problems().len(), 3);
    }
}
