use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use modalsurv::datamodel::{assemble_cohort, join_report, ModalityTable, SurvivalRecord};
use modalsurv::io::{
    read_clinical_dir, read_folds, read_labels, read_modality, read_predictions, write_exclusions, write_folds,
    write_join_report, write_labels, write_modality, write_pca, write_predictions, FeatureFile, Prediction,
};
use modalsurv::pipeline::{
    ensemble_predict_raw, format_mean_std, generate_synthetic_cohort, modality_grid_eval, select_members,
    stratified_kfold, FoldAssignment, SubsetRow,
};
use modalsurv::preprocess::{apply_pca, encode_clinical, fit_pca, Exclusion};
use modalsurv::survcore::{concordance, survival_curve, Concordance};
use ndarray::Array2;

use crate::bundle::{load_members, write_bundle, BundleInput, Manifest};
use crate::config::{require_paths, RunConfig, CLINICAL, PCA_MODALITY};
use crate::error::{validation, CliError};

type CmdResult<T> = Result<T, CliError>;

fn write_file(path: &Path, text: &str) -> CmdResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| validation(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn list_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let ids: Vec<&str> = ids.into_iter().collect();
    const SHOWN: usize = 50;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        write!(s, " ... ({} more)", ids.len() - SHOWN).unwrap();
    }
    s
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub n: usize,
    pub events: usize,
    pub oracle_c: f64,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for SynthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "synthetic cohort: {} patients, {} events, oracle C {:.4}",
            self.n, self.events, self.oracle_c
        )?;
        for p in &self.files {
            writeln!(f, "  wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Writes a synthetic cohort to the configured label and feature paths.
pub fn cmd_synth(cfg: &RunConfig) -> CmdResult<SynthReport> {
    let spec = cfg.synth.scenario.spec();
    let mut problems = Vec::new();
    if cfg.paths.labels.is_none() {
        problems.push("synth needs `paths.labels`".to_string());
    }
    for m in &spec.modalities {
        if !cfg.paths.features.contains_key(&m.name) {
            problems.push(format!("synth needs `paths.features.{}`", m.name));
        }
    }
    if !problems.is_empty() {
        return Err(validation(problems.join("\n")));
    }
    let s = generate_synthetic_cohort(cfg.synth.n, &spec, cfg.synth.censor_rate, cfg.synth.seed)?;
    let mut files = Vec::new();
    let labels = cfg.paths.labels.clone().expect("checked");
    write_labels(&labels, &s.cohort.records)?;
    files.push(labels);
    for table in &s.cohort.modalities {
        let path = cfg.paths.features[&table.name].clone();
        write_modality(&path, table, None)?;
        files.push(path);
    }
    let oracle = cfg.output_dir.join("synth_oracle.csv");
    let mut text = String::from("patient_id,risk\n");
    for (r, risk) in s.cohort.records.iter().zip(&s.oracle_risk) {
        writeln!(text, "{},{risk}", r.patient_id).unwrap();
    }
    write_file(&oracle, &text)?;
    files.push(oracle);
    let oracle_c = concordance(&s.oracle_risk, &s.cohort.times(), &s.cohort.events())?.c_index;
    Ok(SynthReport {
        n: s.cohort.len(),
        events: s.cohort.n_events(),
        oracle_c,
        files,
    })
}

// ---------------------------------------------------------------- prep

#[derive(Debug, Clone, PartialEq)]
pub struct PrepReport {
    pub joined: usize,
    pub excluded: usize,
    /// `(modality, columns written)`.
    pub tables: Vec<(String, usize)>,
    pub pca_columns: Option<usize>,
    pub dir: PathBuf,
}

impl fmt::Display for PrepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "complete cases: {}", self.joined)?;
        writeln!(f, "excluded by clinical encoding: {}", self.excluded)?;
        for (name, cols) in &self.tables {
            writeln!(f, "  {name}: {cols} columns")?;
        }
        if let Some(k) = self.pca_columns {
            writeln!(f, "  {PCA_MODALITY}_pca: {k} columns")?;
        }
        writeln!(f, "outputs in {}", self.dir.display())
    }
}

struct Loaded {
    table: ModalityTable,
    columns: Vec<String>,
    excluded: Vec<Exclusion>,
}

fn load_clinical_dir(dir: &Path) -> CmdResult<Loaded> {
    let enc = encode_clinical(&read_clinical_dir(dir)?)?;
    Ok(Loaded {
        table: enc.table,
        columns: enc.features,
        excluded: enc.excluded,
    })
}

fn load_table(path: &Path, name: &str) -> CmdResult<Loaded> {
    let FeatureFile { table, columns } = read_modality(path, name)?;
    Ok(Loaded {
        table,
        columns,
        excluded: Vec::new(),
    })
}

/// Where a modality's raw features come from.
enum Source {
    ClinicalDir(PathBuf),
    Table(PathBuf),
}

fn sources(
    modalities: &[String],
    clinical_dir: Option<&PathBuf>,
    features: &BTreeMap<String, PathBuf>,
    section: &str,
) -> CmdResult<Vec<(String, Source)>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for m in modalities {
        match (features.get(m), clinical_dir.filter(|_| m == CLINICAL)) {
            (Some(p), _) => out.push((m.clone(), Source::Table(p.clone()))),
            (None, Some(d)) => out.push((m.clone(), Source::ClinicalDir(d.clone()))),
            (None, None) if m == CLINICAL => problems.push(format!(
                "`{section}.clinical_dir` or `{section}.features.{m}` is required"
            )),
            (None, None) => problems.push(format!("`{section}.features.{m}` is required")),
        }
    }
    if !problems.is_empty() {
        return Err(validation(problems.join("\n")));
    }
    require_paths(out.iter().map(|(m, s)| match s {
        Source::ClinicalDir(p) => (format!("{section}.clinical_dir"), p.as_path()),
        Source::Table(p) => (format!("{section}.features.{m}"), p.as_path()),
    }))?;
    Ok(out)
}

fn load_source(name: &str, source: &Source) -> CmdResult<Loaded> {
    match source {
        Source::ClinicalDir(d) => load_clinical_dir(d),
        Source::Table(p) => load_table(p, name),
    }
}

/// Encodes clinical data, aligns every modality with the labels and writes
/// the complete cases.
pub fn cmd_prep(cfg: &RunConfig) -> CmdResult<PrepReport> {
    let labels = cfg
        .paths
        .labels
        .as_ref()
        .ok_or_else(|| validation("prep needs `paths.labels`"))?;
    let srcs = sources(
        &cfg.modalities,
        cfg.paths.clinical_dir.as_ref(),
        &cfg.paths.features,
        "paths",
    )?;
    require_paths([("paths.labels".to_string(), labels.as_path())])?;
    let records = read_labels(labels)?;
    let mut loaded = Vec::new();
    for (name, src) in &srcs {
        loaded.push(load_source(name, src)?);
    }
    let tables: Vec<ModalityTable> = loaded.iter().map(|l| l.table.clone()).collect();
    let excluded: Vec<Exclusion> = loaded.iter().flat_map(|l| l.excluded.clone()).collect();

    let dir = cfg.prep_dir();
    write_join_report(
        &dir.join("alignment.txt"),
        &join_report(&records, &tables, &cfg.modalities),
    )?;
    write_exclusions(&dir.join("exclusions.csv"), &excluded)?;
    let cohort = assemble_cohort(&records, &tables, &cfg.modalities)?;
    write_labels(&dir.join("labels.csv"), &cohort.records)?;
    let mut written = Vec::new();
    for (table, l) in cohort.modalities.iter().zip(&loaded) {
        write_modality(&dir.join(format!("{}.csv", table.name)), table, Some(&l.columns))?;
        written.push((table.name.clone(), table.dim));
    }

    let pca_columns = match cfg.pca_k {
        Some(k) => {
            let x = cohort.matrix(PCA_MODALITY)?;
            let model = fit_pca(x.view(), k)?;
            let z = apply_pca(&model, x.view())?;
            let reduced = ModalityTable::from_rows(
                format!("{PCA_MODALITY}_pca"),
                z.ncols(),
                cohort
                    .ids()
                    .into_iter()
                    .zip(z.rows())
                    .map(|(id, r)| (id.to_string(), r.to_vec())),
            )?;
            let names: Vec<String> = (0..z.ncols()).map(|j| format!("pc{j}")).collect();
            write_modality(&dir.join(format!("{PCA_MODALITY}_pca.csv")), &reduced, Some(&names))?;
            write_pca(&dir.join(format!("{PCA_MODALITY}_pca.model")), &model)?;
            Some(z.ncols())
        }
        None => None,
    };
    log::info!(
        "prep: {} complete cases of {} labelled patients",
        cohort.len(),
        records.len()
    );
    Ok(PrepReport {
        joined: cohort.len(),
        excluded: excluded.iter().map(|e| &e.patient_id).collect::<BTreeSet<_>>().len(),
        tables: written,
        pca_columns,
        dir,
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<SubsetRow>,
    pub bundle: PathBuf,
    pub manifest: Manifest,
    pub folds: FoldAssignment,
    pub reused_folds: bool,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "folds: k={} seed={} ({})",
            self.folds.k,
            self.folds.seed,
            if self.reused_folds { "reused" } else { "new" }
        )?;
        for r in &self.rows {
            let per_fold: Vec<String> = r.fold_c.iter().map(|c| format!("{c:.4}")).collect();
            writeln!(
                f,
                "{:<32} C {}  [{}]  models {}",
                r.subset,
                format_mean_std(r.mean_c, r.std_c),
                per_fold.join(" "),
                r.n_models
            )?;
        }
        writeln!(f, "bundle written to {}", self.bundle.display())
    }
}

/// Fold file at `path` when present and consistent with the cohort, else a new one.
fn folds_for(cfg: &RunConfig, records: &[SurvivalRecord]) -> CmdResult<(FoldAssignment, bool)> {
    let path = cfg.folds_path();
    if path.exists() {
        let folds = read_folds(&path)?;
        if folds.k != cfg.k || folds.seed != cfg.fold_seed {
            return Err(validation(format!(
                "{} holds k={} seed={} but the config asks for k={} seed={}; remove the file to re-split",
                path.display(),
                folds.k,
                folds.seed,
                cfg.k,
                cfg.fold_seed
            )));
        }
        let ids: BTreeSet<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
        let listed: BTreeSet<&str> = folds.folds.keys().map(String::as_str).collect();
        if ids != listed {
            let diff: Vec<&str> = ids.symmetric_difference(&listed).copied().collect();
            return Err(validation(format!(
                "{} does not cover the prepared cohort; differing patients: {}",
                path.display(),
                list_ids(diff)
            )));
        }
        log::info!("reusing fold assignment {}", path.display());
        return Ok((folds, true));
    }
    let folds = stratified_kfold(records, cfg.k, cfg.fold_seed)?;
    write_folds(&path, &folds)?;
    Ok((folds, false))
}

fn prep_inputs(cfg: &RunConfig, modalities: &[String]) -> CmdResult<(PathBuf, Vec<(String, PathBuf)>)> {
    let dir = cfg.prep_dir();
    let labels = dir.join("labels.csv");
    let tables: Vec<(String, PathBuf)> = modalities
        .iter()
        .map(|m| (m.clone(), dir.join(format!("{m}.csv"))))
        .collect();
    let mut all = vec![("prepared labels (run `prep` first)".to_string(), labels.as_path())];
    all.extend(
        tables
            .iter()
            .map(|(m, p)| (format!("prepared `{m}` table (run `prep` first)"), p.as_path())),
    );
    require_paths(all)?;
    Ok((labels, tables))
}

/// Cross-validates every configured subset and writes the model bundle.
pub fn cmd_train(cfg: &RunConfig) -> CmdResult<TrainReport> {
    let used = cfg.used_modalities();
    let (labels, table_paths) = prep_inputs(cfg, &used)?;
    let records = read_labels(&labels)?;
    let mut tables = Vec::new();
    let mut columns = BTreeMap::new();
    for (m, p) in &table_paths {
        let file = read_modality(p, m)?;
        columns.insert(m.clone(), file.columns);
        tables.push(file.table);
    }
    let cohort = assemble_cohort(&records, &tables, &used)?;
    if cohort.len() != records.len() {
        return Err(validation(format!(
            "prepared tables cover {} of {} prepared labels; rerun `prep`",
            cohort.len(),
            records.len()
        )));
    }
    let (folds, reused) = folds_for(cfg, &cohort.records)?;
    let grid = modality_grid_eval(&cohort, &cfg.subsets, &folds, &cfg.cv_config(), cfg.baseline.as_deref())?;
    let main = grid
        .runs
        .iter()
        .find(|r| r.modalities == cfg.modalities)
        .expect("profile subset is always evaluated");
    let bundle = cfg.bundle_dir();
    let manifest = write_bundle(
        &bundle,
        &BundleInput {
            run: main,
            cox: grid.cox.as_ref(),
            columns: cfg.modalities.iter().map(|m| (m.clone(), columns[m].clone())).collect(),
            folds: &folds,
            rows: &grid.rows,
            seeds: cfg.seeds,
        },
    )?;
    for r in &grid.rows {
        log::info!("{}: {}", r.subset, format_mean_std(r.mean_c, r.std_c));
    }
    Ok(TrainReport {
        rows: grid.rows,
        bundle,
        manifest,
        folds,
        reused_folds: reused,
    })
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq)]
pub struct PredictReport {
    pub n_patients: usize,
    pub n_models: usize,
    pub output: PathBuf,
}

impl fmt::Display for PredictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "predicted {} patients with a {}-model ensemble -> {}",
            self.n_patients,
            self.n_models,
            self.output.display()
        )
    }
}

/// Reorders `loaded` to the training column order.
fn align_columns(loaded: Loaded, expected: &[String], name: &str) -> CmdResult<ModalityTable> {
    if loaded.columns == expected {
        return Ok(loaded.table);
    }
    let index: BTreeMap<&str, usize> = loaded
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let missing: Vec<&str> = expected
        .iter()
        .map(String::as_str)
        .filter(|c| !index.contains_key(c))
        .collect();
    if !missing.is_empty() {
        return Err(validation(format!(
            "modality `{name}` lacks training columns: {}",
            missing.join(", ")
        )));
    }
    let order: Vec<usize> = expected.iter().map(|c| index[c.as_str()]).collect();
    ModalityTable::from_rows(
        name,
        expected.len(),
        loaded
            .table
            .rows
            .into_iter()
            .map(|(id, row)| (id, order.iter().map(|&j| row[j]).collect())),
    )
    .map_err(CliError::from)
}

fn predict_sources(cfg: &RunConfig, manifest: &Manifest) -> CmdResult<Vec<(String, Source)>> {
    let p = &cfg.predict;
    if p.clinical_dir.is_some() || !p.features.is_empty() {
        sources(&manifest.modalities, p.clinical_dir.as_ref(), &p.features, "predict")
    } else {
        let (_, tables) = prep_inputs(cfg, &manifest.modalities)?;
        Ok(tables.into_iter().map(|(m, path)| (m, Source::Table(path))).collect())
    }
}

/// Ensemble inference with a trained bundle.
pub fn cmd_predict(cfg: &RunConfig) -> CmdResult<PredictReport> {
    let dir = cfg.bundle_dir();
    require_paths([("model bundle".to_string(), dir.as_path())])?;
    let (manifest, members) = load_members(&dir)?;
    let srcs = predict_sources(cfg, &manifest)?;

    let mut tables = Vec::new();
    let mut unusable: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (name, src) in &srcs {
        let loaded = load_source(name, src)?;
        for e in &loaded.excluded {
            unusable.entry(e.patient_id.clone()).or_default().push(name.clone());
        }
        tables.push(align_columns(loaded, &manifest.columns[name], name)?);
    }
    let all_ids: BTreeSet<String> = tables
        .iter()
        .flat_map(|t| t.rows.keys().cloned())
        .chain(unusable.keys().cloned())
        .collect();
    let mut incomplete = Vec::new();
    for id in &all_ids {
        let mut missing: Vec<&str> = tables
            .iter()
            .filter(|t| !t.rows.contains_key(id))
            .map(|t| t.name.as_str())
            .collect();
        missing.extend(unusable.get(id).into_iter().flatten().map(String::as_str));
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            incomplete.push(format!("{id} ({})", missing.join(", ")));
        }
    }
    if !incomplete.is_empty() {
        return Err(validation(format!(
            "{} patient(s) lack a required modality: {}",
            incomplete.len(),
            list_ids(incomplete.iter().map(String::as_str))
        )));
    }
    if all_ids.is_empty() {
        return Err(validation("no patients to predict"));
    }

    let ids: Vec<&String> = all_ids.iter().collect();
    let raw: BTreeMap<String, Array2<f64>> = tables
        .iter()
        .map(|t| {
            let data: Vec<f64> = ids.iter().flat_map(|id| t.rows[*id].iter().copied()).collect();
            (
                t.name.clone(),
                Array2::from_shape_vec((ids.len(), t.dim), data).expect("rows have the table width"),
            )
        })
        .collect();
    let chosen = select_members(&members, cfg.ensemble);
    let result = ensemble_predict_raw(&chosen, &raw)?;
    let predictions: Vec<Prediction> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Prediction {
            patient_id: (*id).clone(),
            expected_time: result.expected_times[i],
            risk: result.risks[i],
            survival: survival_curve(&result.pmfs[i]),
        })
        .collect();
    let output = cfg.predictions_path();
    write_predictions(&output, &predictions)?;
    Ok(PredictReport {
        n_patients: predictions.len(),
        n_models: chosen.len(),
        output,
    })
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub concordance: Concordance,
    pub n_patients: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patients: {}", self.n_patients)?;
        writeln!(f, "comparable pairs: {}", self.concordance.comparable)?;
        writeln!(f, "C-index: {:.6}", self.concordance.c_index)
    }
}

/// Harrell's C of a predictions file against labels.
pub fn cmd_eval(cfg: &RunConfig) -> CmdResult<EvalReport> {
    let predictions = cfg.eval.predictions.clone().unwrap_or_else(|| cfg.predictions_path());
    let labels = cfg
        .eval
        .labels
        .clone()
        .unwrap_or_else(|| cfg.prep_dir().join("labels.csv"));
    require_paths([
        ("predictions".to_string(), predictions.as_path()),
        ("labels".to_string(), labels.as_path()),
    ])?;
    let records = read_labels(&labels)?;
    let preds: BTreeMap<String, f64> = read_predictions(&predictions)?
        .into_iter()
        .map(|p| (p.patient_id, p.risk))
        .collect();
    let missing: Vec<&str> = records
        .iter()
        .map(|r| r.patient_id.as_str())
        .filter(|id| !preds.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(validation(format!(
            "{} labelled patient(s) have no prediction: {}",
            missing.len(),
            list_ids(missing)
        )));
    }
    let risks: Vec<f64> = records.iter().map(|r| preds[&r.patient_id]).collect();
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    Ok(EvalReport {
        concordance: concordance(&risks, &times, &events)?,
        n_patients: records.len(),
    })
}
