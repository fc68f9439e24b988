//! Run configuration read from one TOML file.
//!
//! Parsing never stops at the first problem: every unknown key, type error
//! and invalid value is collected and reported together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use modalsurv::coxph::CoxOptions;
use modalsurv::deephit::TrainConfig;
use modalsurv::pipeline::{CvConfig, EnsembleScope, PcaScope, PcaSpec, SyntheticSpec};
use toml::{Table, Value};

use crate::error::CliError;

/// Modality that `pca_k` applies to.
pub const PCA_MODALITY: &str = "rna";
pub const CLINICAL: &str = "clinical";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Clinical, MRI and WSI.
    Task1,
    /// Clinical, RNA and WSI.
    Task3,
    /// The modalities of the configured synthetic scenario.
    Synthetic,
    /// The modalities listed under `modalities`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Default,
    Interaction,
    Linear,
}

impl Scenario {
    pub fn spec(self) -> SyntheticSpec {
        match self {
            Scenario::Default => SyntheticSpec::default(),
            Scenario::Interaction => SyntheticSpec::interaction(),
            Scenario::Linear => SyntheticSpec::linear(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub labels: Option<PathBuf>,
    pub clinical_dir: Option<PathBuf>,
    pub features: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub n: usize,
    pub censor_rate: f64,
    pub seed: u64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictSection {
    pub bundle: Option<PathBuf>,
    pub clinical_dir: Option<PathBuf>,
    pub features: BTreeMap<String, PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSection {
    pub predictions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    /// Modalities of the profile, in model input order.
    pub modalities: Vec<String>,
    pub output_dir: PathBuf,
    pub k: usize,
    pub seeds: usize,
    pub fold_seed: u64,
    pub pca_k: Option<usize>,
    pub pca_scope: PcaScope,
    pub workers: usize,
    pub ensemble: EnsembleScope,
    pub log_level: log::LevelFilter,
    /// Subsets to cross-validate; always contains `modalities`.
    pub subsets: Vec<Vec<String>>,
    /// Modalities of the Cox baseline, if any.
    pub baseline: Option<Vec<String>>,
    pub cox_ridge: f64,
    pub paths: Paths,
    pub train: TrainConfig,
    pub synth: SynthSection,
    pub predict: PredictSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|problems| {
            CliError::Validation(format!(
                "{}: {} problem(s)\n  {}",
                path.display(),
                problems.len(),
                problems.join("\n  ")
            ))
        })
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, Vec<String>> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| vec![e.to_string()])?;
        let mut r = Reader::new(base);
        let cfg = r.run_config(root);
        match cfg {
            Some(cfg) if r.problems.is_empty() => Ok(cfg),
            _ => Err(r.problems),
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            train: self.train.clone(),
            n_seeds: self.seeds,
            pca: self
                .pca_k
                .map(|k| PcaSpec {
                    modality: PCA_MODALITY.into(),
                    k,
                })
                .into_iter()
                .collect(),
            pca_scope: self.pca_scope,
            workers: self.workers,
            cox: CoxOptions {
                ridge: self.cox_ridge,
                ..CoxOptions::default()
            },
        }
    }

    pub fn prep_dir(&self) -> PathBuf {
        self.output_dir.join("prep")
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.predict
            .bundle
            .clone()
            .unwrap_or_else(|| self.output_dir.join("bundle"))
    }

    pub fn folds_path(&self) -> PathBuf {
        self.output_dir.join("folds.csv")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.predict
            .output
            .clone()
            .unwrap_or_else(|| self.output_dir.join("predictions.csv"))
    }

    /// Every modality that training needs.
    pub fn used_modalities(&self) -> Vec<String> {
        let mut out = self.modalities.clone();
        for m in self.subsets.iter().flatten().chain(self.baseline.iter().flatten()) {
            if !out.contains(m) {
                out.push(m.clone());
            }
        }
        out
    }
}

const TOP_KEYS: &[&str] = &[
    "profile",
    "modalities",
    "output_dir",
    "k",
    "seeds",
    "fold_seed",
    "pca_k",
    "pca_scope",
    "workers",
    "ensemble",
    "log_level",
    "subsets",
    "baseline",
    "cox_ridge",
    "paths",
    "train",
    "synth",
    "predict",
    "eval",
];

struct Reader<'a> {
    base: &'a Path,
    problems: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(base: &'a Path) -> Self {
        Self {
            base,
            problems: Vec::new(),
        }
    }

    fn bad(&mut self, msg: String) {
        self.problems.push(msg);
    }

    fn unknown(&mut self, scope: &str, table: &Table, known: &[&str]) {
        for key in table.keys().filter(|k| !known.contains(&k.as_str())) {
            let name = if scope.is_empty() {
                key.clone()
            } else {
                format!("{scope}.{key}")
            };
            self.bad(format!("unknown key `{name}`"));
        }
    }

    fn section(&mut self, root: &Table, name: &str) -> Table {
        match root.get(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t.clone(),
            Some(_) => {
                self.bad(format!("`{name}` must be a table"));
                Table::new()
            }
        }
    }

    fn string(&mut self, t: &Table, scope: &str, key: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.bad(format!("`{scope}{key}` must be a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, scope: &str, key: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            other => {
                self.bad(format!("`{scope}{key}` must be a non-negative integer, found {other}"));
                None
            }
        }
    }

    fn float(&mut self, t: &Table, scope: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.bad(format!("`{scope}{key}` must be a number, found {other}"));
                None
            }
        }
    }

    fn path(&mut self, t: &Table, scope: &str, key: &str) -> Option<PathBuf> {
        self.string(t, scope, key).map(|s| self.base.join(s))
    }

    fn string_list(&mut self, v: &Value, what: &str) -> Option<Vec<String>> {
        let Value::Array(items) = v else {
            self.bad(format!("`{what}` must be a list of strings"));
            return None;
        };
        let out: Vec<String> = items.iter().filter_map(|i| i.as_str().map(str::to_string)).collect();
        if out.len() != items.len() {
            self.bad(format!("`{what}` must be a list of strings"));
            return None;
        }
        Some(out)
    }

    fn path_map(&mut self, t: &Table, scope: &str, key: &str) -> BTreeMap<String, PathBuf> {
        match t.get(key) {
            None => BTreeMap::new(),
            Some(Value::Table(m)) => m
                .iter()
                .filter_map(|(name, v)| match v {
                    Value::String(s) => Some((name.clone(), self.base.join(s))),
                    _ => {
                        self.bad(format!("`{scope}{key}.{name}` must be a path string"));
                        None
                    }
                })
                .collect(),
            Some(_) => {
                self.bad(format!("`{scope}{key}` must be a table of modality = path"));
                BTreeMap::new()
            }
        }
    }

    fn choice<T: Copy>(&mut self, t: &Table, key: &str, options: &[(&str, T)], default: T) -> T {
        let Some(s) = self.string(t, "", key) else {
            return default;
        };
        match options.iter().find(|(name, _)| *name == s) {
            Some(&(_, v)) => v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.bad(format!("`{key}` must be one of {}, found `{s}`", names.join(", ")));
                default
            }
        }
    }

    fn train(&mut self, t: &Table) -> TrainConfig {
        let defaults = match Value::try_from(TrainConfig::default()) {
            Ok(Value::Table(d)) => d,
            _ => unreachable!("TrainConfig serializes to a table"),
        };
        let known: Vec<&str> = defaults.keys().map(String::as_str).collect();
        self.unknown("train", t, &known);
        let mut merged = defaults.clone();
        for (key, value) in t.iter().filter(|(k, _)| defaults.contains_key(*k)) {
            // normalize integer literals given for float fields
            let value = match (&defaults[key], value) {
                (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
                _ => value.clone(),
            };
            let mut single = defaults.clone();
            single.insert(key.clone(), value.clone());
            match Value::Table(single).try_into::<TrainConfig>() {
                Ok(_) => {
                    merged.insert(key.clone(), value);
                }
                Err(e) => self.bad(format!("`train.{key}`: {}", e.message())),
            }
        }
        let cfg: TrainConfig = Value::Table(merged).try_into().unwrap_or_default();
        for p in cfg.problems() {
            self.bad(format!("train: {p}"));
        }
        cfg
    }

    fn run_config(&mut self, root: Table) -> Option<RunConfig> {
        self.unknown("", &root, TOP_KEYS);

        let paths_t = self.section(&root, "paths");
        self.unknown("paths", &paths_t, &["labels", "clinical_dir", "features"]);
        let paths = Paths {
            labels: self.path(&paths_t, "paths.", "labels"),
            clinical_dir: self.path(&paths_t, "paths.", "clinical_dir"),
            features: self.path_map(&paths_t, "paths.", "features"),
        };

        let train_t = self.section(&root, "train");
        let train = self.train(&train_t);

        let synth_t = self.section(&root, "synth");
        self.unknown("synth", &synth_t, &["n", "censor_rate", "seed", "scenario"]);
        let scenario = match self.string(&synth_t, "synth.", "scenario").as_deref() {
            None | Some("default") => Scenario::Default,
            Some("interaction") => Scenario::Interaction,
            Some("linear") => Scenario::Linear,
            Some(other) => {
                self.bad(format!(
                    "`synth.scenario` must be default, interaction or linear, found `{other}`"
                ));
                Scenario::Default
            }
        };
        let synth = SynthSection {
            n: self.uint(&synth_t, "synth.", "n").unwrap_or(500) as usize,
            censor_rate: self.float(&synth_t, "synth.", "censor_rate").unwrap_or(0.35),
            seed: self.uint(&synth_t, "synth.", "seed").unwrap_or(0),
            scenario,
        };
        if synth.n < 20 {
            self.bad(format!("`synth.n` must be at least 20, found {}", synth.n));
        }
        if !(0.0..1.0).contains(&synth.censor_rate) {
            self.bad(format!(
                "`synth.censor_rate` must lie in [0, 1), found {}",
                synth.censor_rate
            ));
        }

        let predict_t = self.section(&root, "predict");
        self.unknown("predict", &predict_t, &["bundle", "clinical_dir", "features", "output"]);
        let predict = PredictSection {
            bundle: self.path(&predict_t, "predict.", "bundle"),
            clinical_dir: self.path(&predict_t, "predict.", "clinical_dir"),
            features: self.path_map(&predict_t, "predict.", "features"),
            output: self.path(&predict_t, "predict.", "output"),
        };

        let eval_t = self.section(&root, "eval");
        self.unknown("eval", &eval_t, &["predictions", "labels"]);
        let eval = EvalSection {
            predictions: self.path(&eval_t, "eval.", "predictions"),
            labels: self.path(&eval_t, "eval.", "labels"),
        };

        let profile = match self.string(&root, "", "profile").as_deref() {
            Some("task1") => Some(Profile::Task1),
            Some("task3") => Some(Profile::Task3),
            Some("synthetic") => Some(Profile::Synthetic),
            Some("custom") => Some(Profile::Custom),
            Some(other) => {
                self.bad(format!(
                    "`profile` must be task1, task3, synthetic or custom, found `{other}`"
                ));
                None
            }
            None => {
                self.bad("missing `profile`".into());
                None
            }
        };
        let listed = root.get("modalities").and_then(|v| self.string_list(v, "modalities"));
        let modalities: Vec<String> = match (profile, listed) {
            (Some(Profile::Custom), Some(m)) if !m.is_empty() => m,
            (Some(Profile::Custom), _) => {
                self.bad("profile `custom` needs a non-empty `modalities` list".into());
                Vec::new()
            }
            (Some(_), Some(_)) => {
                self.bad("`modalities` is only allowed with profile `custom`".into());
                Vec::new()
            }
            (Some(Profile::Task1), None) => vec![CLINICAL.into(), "mri".into(), "wsi".into()],
            (Some(Profile::Task3), None) => vec![CLINICAL.into(), PCA_MODALITY.into(), "wsi".into()],
            (Some(Profile::Synthetic), None) => scenario.spec().modalities.iter().map(|m| m.name.clone()).collect(),
            (None, _) => Vec::new(),
        };
        let mut dup = modalities.clone();
        dup.sort();
        dup.dedup();
        if dup.len() != modalities.len() {
            self.bad("`modalities` lists a modality twice".into());
        }

        let output_dir = self
            .path(&root, "", "output_dir")
            .unwrap_or_else(|| self.base.join("out"));
        let k = self.uint(&root, "", "k").unwrap_or(5) as usize;
        if k < 2 {
            self.bad(format!("`k` must be at least 2, found {k}"));
        }
        let seeds = self.uint(&root, "", "seeds").unwrap_or(10) as usize;
        if seeds == 0 {
            self.bad("`seeds` must be at least 1".into());
        }
        let fold_seed = self.uint(&root, "", "fold_seed").unwrap_or(0);
        let pca_k = self.uint(&root, "", "pca_k").map(|v| v as usize);
        if pca_k == Some(0) {
            self.bad("`pca_k` must be at least 1".into());
        }
        if pca_k.is_some() && !modalities.iter().any(|m| m == PCA_MODALITY) {
            self.bad(format!(
                "`pca_k` is set but the profile has no `{PCA_MODALITY}` modality"
            ));
        }
        let pca_scope = self.choice(
            &root,
            "pca_scope",
            &[("fold", PcaScope::Fold), ("full", PcaScope::Full)],
            PcaScope::Fold,
        );
        let workers = self.uint(&root, "", "workers").unwrap_or(1) as usize;
        if workers == 0 {
            self.bad("`workers` must be at least 1".into());
        }
        let ensemble = self.choice(
            &root,
            "ensemble",
            &[("all", EnsembleScope::All), ("fold_only", EnsembleScope::FoldOnly)],
            EnsembleScope::All,
        );
        let log_level = self.choice(
            &root,
            "log_level",
            &[
                ("off", log::LevelFilter::Off),
                ("error", log::LevelFilter::Error),
                ("warn", log::LevelFilter::Warn),
                ("info", log::LevelFilter::Info),
                ("debug", log::LevelFilter::Debug),
                ("trace", log::LevelFilter::Trace),
            ],
            log::LevelFilter::Info,
        );
        let cox_ridge = self.float(&root, "", "cox_ridge").unwrap_or(0.0);
        if !(cox_ridge >= 0.0 && cox_ridge.is_finite()) {
            self.bad(format!("`cox_ridge` must be >= 0, found {cox_ridge}"));
        }

        let mut subsets: Vec<Vec<String>> = match root.get("subsets") {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| self.string_list(v, &format!("subsets[{i}]")))
                .collect(),
            Some(_) => {
                self.bad("`subsets` must be a list of modality lists".into());
                Vec::new()
            }
        };
        if !modalities.is_empty() && !subsets.iter().any(|s| s == &modalities) {
            subsets.push(modalities.clone());
        }
        let baseline = match root.get("baseline") {
            None => modalities
                .iter()
                .any(|m| m == CLINICAL)
                .then(|| vec![CLINICAL.to_string()]),
            Some(v) => self.string_list(v, "baseline").filter(|b| !b.is_empty()),
        };
        for (i, s) in subsets.iter().enumerate() {
            if s.is_empty() {
                self.bad(format!("`subsets[{i}]` is empty"));
            }
        }
        for m in subsets.iter().flatten().chain(baseline.iter().flatten()) {
            if !modalities.contains(m) {
                self.bad(format!("subset or baseline modality `{m}` is not in the profile"));
            }
        }

        Some(RunConfig {
            profile: profile?,
            modalities,
            output_dir,
            k,
            seeds,
            fold_seed,
            pca_k,
            pca_scope,
            workers,
            ensemble,
            log_level,
            subsets,
            baseline,
            cox_ridge,
            paths,
            train,
            synth,
            predict,
            eval,
        })
    }
}

/// Fails unless every path exists.
pub fn require_paths<'p>(paths: impl IntoIterator<Item = (String, &'p Path)>) -> Result<(), CliError> {
    let missing: Vec<String> = paths
        .into_iter()
        .filter(|(_, p)| !p.exists())
        .map(|(what, p)| format!("{what}: {} does not exist", p.display()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(missing.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, Vec<String>> {
        RunConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn minimal_synthetic_profile() {
        let cfg = parse("profile = \"synthetic\"").unwrap();
        assert_eq!(cfg.modalities, vec!["signal_a", "signal_b", "noise"]);
        assert_eq!(cfg.subsets, vec![cfg.modalities.clone()]);
        assert_eq!(cfg.baseline, None);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.seeds, 10);
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn task_profiles() {
        let t1 = parse("profile = \"task1\"").unwrap();
        assert_eq!(t1.modalities, vec!["clinical", "mri", "wsi"]);
        assert_eq!(t1.baseline, Some(vec!["clinical".to_string()]));
        let t3 = parse("profile = \"task3\"\npca_k = 128").unwrap();
        assert_eq!(t3.modalities, vec!["clinical", "rna", "wsi"]);
        assert_eq!(
            t3.cv_config().pca,
            vec![PcaSpec {
                modality: "rna".into(),
                k: 128
            }]
        );
    }

    #[test]
    fn every_problem_is_reported() {
        let text = r#"
profile = "task1"
kk = 5
seeds = 0
pca_k = 4
ensemble = "some"
[train]
learning_rat = 0.1
dropout = 2.0
n_bins = "thirty"
[paths]
lables = "x"
"#;
        let problems = parse(text).unwrap_err();
        let joined = problems.join("\n");
        for needle in [
            "unknown key `kk`",
            "`seeds` must be at least 1",
            "`pca_k` is set",
            "`ensemble` must be one of",
            "unknown key `train.learning_rat`",
            "dropout must be in [0, 1)",
            "`train.n_bins`",
            "unknown key `paths.lables`",
        ] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }
        assert_eq!(problems.len(), 8, "{joined}");
    }

    #[test]
    fn train_overrides_and_integer_floats() {
        let cfg =
            parse("profile = \"synthetic\"\n[train]\nlearning_rate = 1\nn_bins = 12\nhidden_widths = [8]").unwrap();
        assert_eq!(cfg.train.learning_rate, 1.0);
        assert_eq!(cfg.train.n_bins, 12);
        assert_eq!(cfg.train.hidden_widths, vec![8]);
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let cfg =
            parse("profile = \"task1\"\n[paths]\nlabels = \"l.csv\"\nfeatures = { wsi = \"/abs/wsi.csv\" }").unwrap();
        assert_eq!(cfg.paths.labels, Some(PathBuf::from("/base/l.csv")));
        assert_eq!(cfg.paths.features["wsi"], PathBuf::from("/abs/wsi.csv"));
    }

    #[test]
    fn subsets_are_checked_against_profile() {
        let cfg =
            parse("profile = \"task1\"\nsubsets = [[\"clinical\"], [\"clinical\", \"wsi\"]]\nbaseline = []").unwrap();
        assert_eq!(cfg.subsets.len(), 3);
        assert_eq!(cfg.baseline, None);
        let err = parse("profile = \"task1\"\nsubsets = [[\"rna\"]]").unwrap_err();
        assert!(err[0].contains("`rna` is not in the profile"));
    }

    #[test]
    fn custom_profile_needs_modalities() {
        assert!(parse("profile = \"custom\"").is_err());
        assert!(parse("profile = \"task1\"\nmodalities = [\"a\"]").is_err());
        let cfg = parse("profile = \"custom\"\nmodalities = [\"a\", \"b\"]").unwrap();
        assert_eq!(cfg.modalities, vec!["a", "b"]);
    }

    #[test]
    fn missing_profile_and_bad_syntax() {
        assert_eq!(parse("k = 3").unwrap_err(), vec!["missing `profile`".to_string()]);
        assert!(parse("profile = ").is_err());
    }
}
