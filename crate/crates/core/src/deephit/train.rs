use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::DropoutMasks;
use super::{adam_step, gradient_with_masks, init_params, predict_pmfs, AdamState, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::survcore::{bin_index, concordance, expected_time, TimeGrid};

/// Model inputs with discretized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// One `n × d_m` matrix per modality.
    pub inputs: Vec<Array2<f64>>,
    pub bins: Vec<usize>,
    pub events: Vec<bool>,
}

impl Batch {
    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.inputs.iter().map(|x| x.view()).collect()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.bins.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.events.len() != n || self.inputs.iter().any(|x| x.nrows() != n) {
            return Err(Error::DimensionMismatch {
                context: "batch rows",
                expected: n,
                actual: self.events.len(),
            });
        }
        Ok(())
    }
}

/// Preprocessed features with raw survival outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<Array2<f64>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.inputs.iter().map(|x| x.view()).collect()
    }

    pub fn to_batch(&self, grid: &TimeGrid) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            bins: self.times.iter().map(|&t| bin_index(t, grid)).collect(),
            events: self.events.clone(),
        }
    }

    /// `-expected_time` per patient under `params`.
    pub fn risks(&self, params: &ModelParams, grid: &TimeGrid) -> Result<Vec<f64>> {
        predict_pmfs(&self.views(), params)?
            .iter()
            .map(|p| expected_time(p, grid).map(|t| -t))
            .collect()
    }

    pub fn c_index(&self, params: &ModelParams, grid: &TimeGrid) -> Result<f64> {
        let risks = self.risks(params, grid)?;
        Ok(concordance(&risks, &self.times, &self.events)?.c_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training objective before this epoch's update (with dropout).
    pub loss: f64,
    /// Validation C-index after the update.
    pub val_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the best validation C-index.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val_c: f64,
    pub history: Vec<EpochRecord>,
}

/// Full-batch Adam training with early stopping on validation C-index.
///
/// Training stops once `patience` consecutive epochs fail to improve on the
/// best validation C-index, or at `max_epochs`.
pub fn train_fold(
    train: &TrainingSet,
    val: &TrainingSet,
    grid: &TimeGrid,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be nonempty".into(),
        ));
    }
    if grid.n_bins() != config.n_bins {
        return Err(Error::DimensionMismatch {
            context: "time grid bins vs config",
            expected: config.n_bins,
            actual: grid.n_bins(),
        });
    }
    // fails fast when the validation C-index is undefined
    concordance(&vec![0.0; val.len()], &val.times, &val.events)?;

    let dims: Vec<usize> = train.inputs.iter().map(|x| x.ncols()).collect();
    let mut params = init_params(&dims, config, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let batch = train.to_batch(grid);

    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        let masks = (config.dropout > 0.0)
            .then(|| DropoutMasks::sample(&mut rng, batch.len(), &params.hidden_widths(), config.dropout));
        let (loss, grads) = gradient_with_masks(&batch, &params, config, masks.as_ref())?;
        adam_step(&mut params, &grads, &mut state, config.learning_rate);
        if !params.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        let val_c = val.c_index(&params, grid)?;
        history.push(EpochRecord {
            epoch,
            loss: loss.total,
            val_c,
        });
        if val_c > best.2 {
            best = (params.clone(), epoch, val_c);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    let (params, best_epoch, best_val_c) = best;
    Ok(TrainOutcome {
        params,
        best_epoch,
        best_val_c,
        history,
    })
}
