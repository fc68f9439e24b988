//! Model bundle: every trained member plus what is needed to apply it.
//!
//! ```text
//! bundle/
//!   manifest.json
//!   folds.csv  grid.txt  results.csv
//!   models/f{fold}_s{seed_index}.params
//!   transforms/f{fold}_{modality}.std   (.pca when reduced)
//!   cox/f{fold}.cox
//! ```
//!
//! The manifest records a SHA-256 per file. Only its `metadata` section
//! changes between identical runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use modalsurv::io::{
    read_grid, read_params, read_pca, read_standardizer, write_cox, write_folds, write_grid, write_params, write_pca,
    write_results, write_standardizer, ParamsFile,
};
use modalsurv::pipeline::{
    CoxCvResult, CvResult, FoldAssignment, FoldTransforms, MemberModel, ModalityTransform, SubsetRow,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, CliError};

pub const FORMAT: &str = "modalsurv-bundle-v1";
pub const MANIFEST: &str = "manifest.json";
const GRID: &str = "grid.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub fold: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub params: String,
    pub val_c: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTransform {
    pub fold: usize,
    pub modality: String,
    pub standardizer: String,
    pub pca: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCox {
    pub modalities: Vec<String>,
    pub folds: Vec<String>,
    pub fold_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub modalities: Vec<String>,
    /// Raw input columns per modality, as named in the training tables.
    pub columns: BTreeMap<String, Vec<String>>,
    pub k: usize,
    pub seeds: usize,
    pub fold_seed: u64,
    pub grid: String,
    pub folds: String,
    pub results: String,
    pub members: Vec<ManifestMember>,
    pub transforms: Vec<ManifestTransform>,
    pub cox: Option<ManifestCox>,
    pub fold_c: Vec<f64>,
    pub mean_c: f64,
    pub std_c: f64,
    /// Relative path → SHA-256 of every other bundle file.
    pub files: BTreeMap<String, String>,
    pub metadata: Metadata,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Empties `dir` for a new bundle, refusing to touch anything that is not one.
fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| validation(format!("{}: {e}", dir.display()));
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io)?.next().is_some();
        if non_empty && !dir.join(MANIFEST).exists() {
            return Err(validation(format!(
                "{} exists and is not a model bundle; refusing to overwrite it",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(io)?;
    }
    fs::create_dir_all(dir).map_err(io)
}

pub struct BundleInput<'a> {
    pub run: &'a CvResult,
    pub cox: Option<&'a CoxCvResult>,
    pub columns: BTreeMap<String, Vec<String>>,
    pub folds: &'a FoldAssignment,
    pub rows: &'a [SubsetRow],
    pub seeds: usize,
}

fn transform_files(fold: usize, t: &ModalityTransform) -> (String, Option<String>) {
    (
        format!("transforms/f{fold}_{}.std", t.modality),
        t.pca.as_ref().map(|_| format!("transforms/f{fold}_{}.pca", t.modality)),
    )
}

pub fn write_bundle(dir: &Path, input: &BundleInput) -> Result<Manifest, CliError> {
    prepare_dir(dir)?;
    let run = input.run;
    write_folds(&dir.join("folds.csv"), input.folds)?;
    write_grid(&dir.join(GRID), &run.grid)?;
    write_results(&dir.join("results.csv"), input.rows)?;

    let mut transforms = Vec::new();
    for fold in 0..input.folds.k {
        let member = run
            .members
            .iter()
            .find(|m| m.fold == fold)
            .ok_or_else(|| CliError::Runtime(format!("no trained member for fold {fold}")))?;
        for t in &member.transforms.modalities {
            let (std_file, pca_file) = transform_files(fold, t);
            write_standardizer(&dir.join(&std_file), &t.standardizer)?;
            if let (Some(p), Some(f)) = (&t.pca, &pca_file) {
                write_pca(&dir.join(f), p)?;
            }
            transforms.push(ManifestTransform {
                fold,
                modality: t.modality.clone(),
                standardizer: std_file,
                pca: pca_file,
            });
        }
    }

    let mut members = Vec::new();
    for m in &run.members {
        let file = format!("models/f{}_s{}.params", m.fold, m.seed_index);
        write_params(
            &dir.join(&file),
            &ParamsFile {
                params: m.params.clone(),
                seed: m.seed,
                grid: GRID.into(),
            },
        )?;
        members.push(ManifestMember {
            fold: m.fold,
            seed_index: m.seed_index,
            seed: m.seed,
            params: file,
            val_c: m.val_c,
            best_epoch: m.best_epoch,
            epochs_run: m.epochs_run,
        });
    }

    let cox = match input.cox {
        Some(c) => {
            let mut files = Vec::new();
            for (fold, f) in c.folds.iter().enumerate() {
                let file = format!("cox/f{fold}.cox");
                write_cox(&dir.join(&file), &f.model, &f.columns)?;
                files.push(file);
            }
            Some(ManifestCox {
                modalities: c.modalities.clone(),
                folds: files,
                fold_c: c.fold_c.clone(),
            })
        }
        None => None,
    };

    let mut files = BTreeMap::new();
    for rel in list_files(dir)? {
        let hash = sha256_file(&dir.join(&rel))?;
        files.insert(rel, hash);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        modalities: run.modalities.clone(),
        columns: input.columns.clone(),
        k: input.folds.k,
        seeds: input.seeds,
        fold_seed: input.folds.seed,
        grid: GRID.into(),
        folds: "folds.csv".into(),
        results: "results.csv".into(),
        members,
        transforms,
        cox,
        fold_c: run.fold_c.clone(),
        mean_c: run.mean_c,
        std_c: run.std_c,
        files,
        metadata: Metadata {
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            version: env!("CARGO_PKG_VERSION").into(),
        },
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST), text + "\n").map_err(|e| validation(format!("{}: {e}", dir.display())))?;
    Ok(manifest)
}

/// Relative paths of every file under `dir` except the manifest, sorted.
fn list_files(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let abs = dir.join(&rel);
        for entry in fs::read_dir(&abs).map_err(|e| validation(format!("{}: {e}", abs.display())))? {
            let entry = entry.map_err(|e| validation(format!("{}: {e}", abs.display())))?;
            let child = rel.join(entry.file_name());
            if entry.path().is_dir() {
                stack.push(child);
            } else if child != Path::new(MANIFEST) {
                out.push(child.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT {
        return Err(validation(format!(
            "{}: unsupported bundle format `{}`",
            path.display(),
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Checks every listed hash and that no file is missing from the list.
pub fn verify(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let mut problems = Vec::new();
    for (rel, expected) in &manifest.files {
        let path = dir.join(rel);
        if !path.exists() {
            problems.push(format!("{rel}: missing"));
        } else if &sha256_file(&path)? != expected {
            problems.push(format!("{rel}: hash mismatch"));
        }
    }
    for rel in list_files(dir)? {
        if !manifest.files.contains_key(&rel) {
            problems.push(format!("{rel}: not listed in the manifest"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(validation(format!(
            "bundle {} failed verification:\n  {}",
            dir.display(),
            problems.join("\n  ")
        )))
    }
}

/// Verifies the bundle and rebuilds every member model.
pub fn load_members(dir: &Path) -> Result<(Manifest, Vec<MemberModel>), CliError> {
    let manifest = read_manifest(dir)?;
    verify(dir, &manifest)?;
    let grid = read_grid(&dir.join(&manifest.grid))?;
    let mut fold_transforms: BTreeMap<usize, FoldTransforms> = BTreeMap::new();
    for name in &manifest.modalities {
        for fold in 0..manifest.k {
            let t = manifest
                .transforms
                .iter()
                .find(|t| t.fold == fold && &t.modality == name)
                .ok_or_else(|| validation(format!("manifest lacks the `{name}` transform of fold {fold}")))?;
            let transform = ModalityTransform {
                modality: name.clone(),
                pca: t.pca.as_ref().map(|p| read_pca(&dir.join(p))).transpose()?,
                standardizer: read_standardizer(&dir.join(&t.standardizer))?,
            };
            fold_transforms
                .entry(fold)
                .or_insert_with(|| FoldTransforms { modalities: Vec::new() })
                .modalities
                .push(transform);
        }
    }
    let members = manifest
        .members
        .iter()
        .map(|m| {
            let file = read_params(&dir.join(&m.params))?;
            if file.grid != manifest.grid {
                return Err(validation(format!("{}: refers to grid `{}`", m.params, file.grid)));
            }
            let transforms = fold_transforms
                .get(&m.fold)
                .ok_or_else(|| validation(format!("{}: fold {} out of range", m.params, m.fold)))?
                .clone();
            if transforms.output_dims() != file.params.modality_dims() {
                return Err(validation(format!(
                    "{}: input widths disagree with the transforms",
                    m.params
                )));
            }
            Ok(MemberModel {
                fold: m.fold,
                seed_index: m.seed_index,
                seed: file.seed,
                grid: grid.clone(),
                transforms,
                params: file.params,
                val_c: m.val_c,
                best_epoch: m.best_epoch,
                epochs_run: m.epochs_run,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((manifest, members))
}
