use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FoldAssignment;
use crate::coxph::{cox_risk, fit_coxph, CoxModel, CoxOptions};
use crate::datamodel::Cohort;
use crate::deephit::{train_fold, ModelParams, TrainConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::preprocess::{apply_pca, apply_standardizer, fit_pca, fit_standardizer, PcaModel, Standardizer};
use crate::survcore::{build_time_grid, c_index, TimeGrid};

/// Which rows the PCA of a modality is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaScope {
    /// Training-fold rows only.
    #[default]
    Fold,
    /// Every cohort row, once, before splitting.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSpec {
    pub modality: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub train: TrainConfig,
    pub n_seeds: usize,
    pub pca: Vec<PcaSpec>,
    pub pca_scope: PcaScope,
    /// Concurrent fold×seed jobs; 1 runs them in order.
    pub workers: usize,
    pub cox: CoxOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            n_seeds: 10,
            pca: Vec::new(),
            pca_scope: PcaScope::Fold,
            workers: 1,
            cox: CoxOptions::default(),
        }
    }
}

impl CvConfig {
    /// Seed of the `index`-th repeat.
    pub fn member_seed(&self, index: usize) -> u64 {
        self.train.seed.wrapping_add(index as u64)
    }
}

/// Optional PCA followed by z-scoring for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityTransform {
    pub modality: String,
    pub pca: Option<PcaModel>,
    pub standardizer: Standardizer,
}

impl ModalityTransform {
    pub fn input_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.standardizer.dim(), |p| p.input_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.pca {
            Some(p) => apply_standardizer(&self.standardizer, apply_pca(p, x)?.view()),
            None => apply_standardizer(&self.standardizer, x),
        }
    }
}

/// Per-modality transforms fitted on one training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTransforms {
    pub modalities: Vec<ModalityTransform>,
}

impl FoldTransforms {
    /// Fits on the `train` rows of `cohort`. A modality found in `fixed_pca`
    /// reuses that model instead of fitting its own.
    pub fn fit(
        cohort: &Cohort,
        train: &[usize],
        pca: &[PcaSpec],
        fixed_pca: &BTreeMap<String, PcaModel>,
    ) -> Result<Self> {
        let mut modalities = Vec::new();
        for table in &cohort.modalities {
            let x = cohort.matrix(&table.name)?.select(Axis(0), train);
            let model = match (
                fixed_pca.get(&table.name),
                pca.iter().find(|p| p.modality == table.name),
            ) {
                (Some(m), _) => Some(m.clone()),
                (None, Some(spec)) => Some(fit_pca(x.view(), spec.k)?),
                (None, None) => None,
            };
            let reduced = match &model {
                Some(m) => apply_pca(m, x.view())?,
                None => x,
            };
            modalities.push(ModalityTransform {
                modality: table.name.clone(),
                pca: model,
                standardizer: fit_standardizer(reduced.view())?,
            });
        }
        Ok(Self { modalities })
    }

    pub fn names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.modality.clone()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.output_dim()).collect()
    }

    /// Transformed matrices, one per modality, in transform order.
    pub fn apply(&self, cohort: &Cohort) -> Result<Vec<Array2<f64>>> {
        self.modalities
            .iter()
            .map(|t| t.apply(cohort.matrix(&t.modality)?.view()))
            .collect()
    }

    /// As [`FoldTransforms::apply`] on raw matrices keyed by modality name.
    pub fn apply_raw(&self, raw: &BTreeMap<String, Array2<f64>>) -> Result<Vec<Array2<f64>>> {
        self.modalities
            .iter()
            .map(|t| {
                let x = raw
                    .get(&t.modality)
                    .ok_or_else(|| Error::UnknownModality(t.modality.clone()))?;
                if x.ncols() != t.input_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "modality feature columns",
                        expected: t.input_dim(),
                        actual: x.ncols(),
                    });
                }
                t.apply(x.view())
            })
            .collect()
    }
}

/// One trained (fold, seed) member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberModel {
    pub fold: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub transforms: FoldTransforms,
    pub params: ModelParams,
    /// Held-out C-index at the selected epoch.
    pub val_c: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub modalities: Vec<String>,
    pub grid: TimeGrid,
    pub fold_hash: u64,
    pub members: Vec<MemberModel>,
    /// Seed-averaged held-out C per fold.
    pub fold_c: Vec<f64>,
    pub mean_c: f64,
    pub std_c: f64,
}

impl CvResult {
    pub fn summary(&self) -> String {
        format_mean_std(self.mean_c, self.std_c)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `0.843±0.08`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}±{std:.2}")
}

/// Runs `job(i)` for `i in 0..n` on up to `workers` threads; results keep job order.
pub(crate) fn run_jobs<T, F>(n: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(i);
                slots.lock().expect("job slot lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("job slot lock")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

fn full_pca(cohort: &Cohort, config: &CvConfig) -> Result<BTreeMap<String, PcaModel>> {
    if config.pca_scope != PcaScope::Full {
        return Ok(BTreeMap::new());
    }
    config
        .pca
        .iter()
        .filter(|p| cohort.modality(&p.modality).is_some())
        .map(|p| Ok((p.modality.clone(), fit_pca(cohort.matrix(&p.modality)?.view(), p.k)?)))
        .collect()
}

fn fold_error(fold: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::CIndexUndefined => Error::FoldCIndexUndefined { fold },
        other => other,
    }
}

struct FoldData {
    transforms: FoldTransforms,
    train: TrainingSet,
    test: TrainingSet,
}

fn fold_data(
    cohort: &Cohort,
    folds: &FoldAssignment,
    fold: usize,
    config: &CvConfig,
    fixed: &BTreeMap<String, PcaModel>,
) -> Result<FoldData> {
    let (train_idx, test_idx) = folds.split(&cohort.ids(), fold)?;
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::InvalidArgument(format!("fold {fold} has an empty side")));
    }
    let transforms = FoldTransforms::fit(cohort, &train_idx, &config.pca, fixed)?;
    let all = transforms.apply(cohort)?;
    let times = cohort.times();
    let events = cohort.events();
    let take = |idx: &[usize]| TrainingSet {
        inputs: all.iter().map(|x| x.select(Axis(0), idx)).collect(),
        times: idx.iter().map(|&i| times[i]).collect(),
        events: idx.iter().map(|&i| events[i]).collect(),
    };
    Ok(FoldData {
        train: take(&train_idx),
        test: take(&test_idx),
        transforms,
    })
}

/// Cross-validated training of every (fold, seed) member.
///
/// Preprocessing is fitted on each training fold; the held-out fold drives
/// early stopping and supplies the reported C-index. Seed repeats are averaged
/// within each fold before the mean and std over folds are taken.
pub fn run_cv(cohort: &Cohort, folds: &FoldAssignment, config: &CvConfig) -> Result<CvResult> {
    config.train.validate()?;
    if config.n_seeds == 0 {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let modalities: Vec<String> = cohort.modality_names().iter().map(|s| s.to_string()).collect();
    if modalities.is_empty() {
        return Err(Error::InvalidArgument("cohort has no modalities".into()));
    }
    let grid = build_time_grid(&cohort.times(), config.train.n_bins)?;
    let fixed = full_pca(cohort, config)?;
    let data = (0..folds.k)
        .map(|f| fold_data(cohort, folds, f, config, &fixed))
        .collect::<Result<Vec<_>>>()?;

    let n_jobs = folds.k * config.n_seeds;
    let results = run_jobs(n_jobs, config.workers, |job| {
        let (fold, seed_index) = (job / config.n_seeds, job % config.n_seeds);
        let d = &data[fold];
        let train_cfg = TrainConfig {
            seed: config.member_seed(seed_index),
            ..config.train.clone()
        };
        let out = train_fold(&d.train, &d.test, &grid, &train_cfg).map_err(fold_error(fold))?;
        log::info!(
            "[{}] fold {fold} seed {}: C={:.4} at epoch {} of {}",
            modalities.join("+"),
            train_cfg.seed,
            out.best_val_c,
            out.best_epoch + 1,
            out.history.len()
        );
        Ok(MemberModel {
            fold,
            seed_index,
            seed: train_cfg.seed,
            grid: grid.clone(),
            transforms: d.transforms.clone(),
            params: out.params,
            val_c: out.best_val_c,
            best_epoch: out.best_epoch,
            epochs_run: out.history.len(),
        })
    });
    let members = results.into_iter().collect::<Result<Vec<_>>>()?;

    let fold_c: Vec<f64> = (0..folds.k)
        .map(|f| {
            let cs: Vec<f64> = members.iter().filter(|m| m.fold == f).map(|m| m.val_c).collect();
            cs.iter().sum::<f64>() / cs.len() as f64
        })
        .collect();
    let (mean_c, std_c) = mean_std(&fold_c);
    Ok(CvResult {
        modalities,
        grid,
        fold_hash: folds.fingerprint(),
        members,
        fold_c,
        mean_c,
        std_c,
    })
}

/// Cox model for one fold, on the non-constant standardized columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxFold {
    pub transforms: FoldTransforms,
    /// Columns of the concatenated transformed features fed to the model.
    pub columns: Vec<usize>,
    pub model: CoxModel,
    pub test_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxCvResult {
    pub modalities: Vec<String>,
    pub folds: Vec<CoxFold>,
    pub fold_c: Vec<f64>,
    pub mean_c: f64,
    pub std_c: f64,
}

impl CoxCvResult {
    pub fn summary(&self) -> String {
        format_mean_std(self.mean_c, self.std_c)
    }
}

fn concat(mats: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("equal row counts")
}

/// Cox baseline under the same folds and preprocessing as [`run_cv`].
pub fn run_cox_cv(cohort: &Cohort, folds: &FoldAssignment, config: &CvConfig) -> Result<CoxCvResult> {
    let modalities: Vec<String> = cohort.modality_names().iter().map(|s| s.to_string()).collect();
    let fixed = full_pca(cohort, config)?;
    if config.cox.ridge > 0.0 {
        log::warn!("Cox baseline uses a ridge penalty of {}", config.cox.ridge);
    }
    let mut out = Vec::new();
    for fold in 0..folds.k {
        let d = fold_data(cohort, folds, fold, config, &fixed)?;
        let train_x = concat(&d.train.inputs);
        let constant: Vec<bool> = d
            .transforms
            .modalities
            .iter()
            .flat_map(|t| {
                (0..t.output_dim())
                    .map(|c| t.standardizer.is_constant(c))
                    .collect::<Vec<_>>()
            })
            .collect();
        let columns: Vec<usize> = (0..constant.len()).filter(|&c| !constant[c]).collect();
        if columns.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "fold {fold}: every Cox covariate is constant"
            )));
        }
        let model = fit_coxph(
            train_x.select(Axis(1), &columns).view(),
            &d.train.times,
            &d.train.events,
            config.cox,
        )?;
        let test_x = concat(&d.test.inputs).select(Axis(1), &columns);
        let risk = cox_risk(&model, test_x.view())?;
        let test_c =
            c_index(risk.as_slice().expect("contiguous"), &d.test.times, &d.test.events).map_err(fold_error(fold))?;
        log::info!("[coxph {}] fold {fold}: C={test_c:.4}", modalities.join("+"));
        out.push(CoxFold {
            transforms: d.transforms,
            columns,
            model,
            test_c,
        });
    }
    let fold_c: Vec<f64> = out.iter().map(|f| f.test_c).collect();
    let (mean_c, std_c) = mean_std(&fold_c);
    Ok(CoxCvResult {
        modalities,
        folds: out,
        fold_c,
        mean_c,
        std_c,
    })
}
