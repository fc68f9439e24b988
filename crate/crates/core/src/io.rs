//! Delimited-text and flat numeric file formats.
//!
//! Every reader reports failures with the file path and a 1-based line
//! number. Floats are written with Rust's shortest round-trip formatting, so
//! write → read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::coxph::CoxModel;
use crate::datamodel::{JoinReport, ModalityTable, SurvivalRecord};
use crate::deephit::ModelParams;
use crate::error::{Error, Result};
use crate::pipeline::{FoldAssignment, SubsetRow};
use crate::preprocess::{Exclusion, PcaModel, RawClinical, RawValue, Standardizer};
use crate::survcore::TimeGrid;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

/// Header plus records of a comma-separated file, each with its line number.
fn read_csv(path: &Path, comments: bool) -> Result<(Vec<String>, Vec<(usize, csv::StringRecord)>)> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(comments.then_some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::parse(path, 1, "missing header"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::parse(
            path,
            1,
            format!(
                "expected header starting `{}`, found `{}`",
                expected.join(","),
                header.join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{what}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("{what}: `{field}` is not finite")));
    }
    Ok(v)
}

// ---------------------------------------------------------------- labels

/// Reads `patient_id,time_months,event` with `event` in {0, 1}.
pub fn read_labels(path: &Path) -> Result<Vec<SurvivalRecord>> {
    let (header, rows) = read_csv(path, false)?;
    expect_header(path, &header, &["patient_id", "time_months", "event"])?;
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty patient_id"));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(Error::parse(
                path,
                line,
                format!("patient `{id}` already listed on line {prev}"),
            ));
        }
        let time = parse_f64(path, line, &rec[1], "time_months")?;
        let event = match &rec[2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("event must be 0 or 1, found `{other}`"),
                ))
            }
        };
        out.push(SurvivalRecord::new(id, time, event).map_err(|e| Error::parse(path, line, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, records: &[SurvivalRecord]) -> Result<()> {
    let mut s = String::from("patient_id,time_months,event\n");
    for r in records {
        writeln!(s, "{},{},{}", r.patient_id, r.time, r.event as u8).unwrap();
    }
    write_text(path, &s)
}

// ---------------------------------------------------------------- modality tables

/// Feature table with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub table: ModalityTable,
    pub columns: Vec<String>,
}

/// Reads a `patient_id,<features...>` table as modality `name`.
pub fn read_modality(path: &Path, name: &str) -> Result<FeatureFile> {
    let (header, rows) = read_csv(path, false)?;
    expect_header(path, &header, &["patient_id"])?;
    let columns: Vec<String> = header[1..].to_vec();
    if columns.is_empty() {
        return Err(Error::parse(path, 1, "no feature columns"));
    }
    let mut table = ModalityTable::new(name, columns.len());
    for (line, rec) in rows {
        if rec.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let row = (1..rec.len())
            .map(|j| parse_f64(path, line, &rec[j], &columns[j - 1]))
            .collect::<Result<Vec<_>>>()?;
        table
            .insert(rec[0].to_string(), row)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(FeatureFile { table, columns })
}

/// Writes a modality table; `columns` defaults to `f0, f1, ...`.
pub fn write_modality(path: &Path, table: &ModalityTable, columns: Option<&[String]>) -> Result<()> {
    let default: Vec<String>;
    let columns = match columns {
        Some(c) => c,
        None => {
            default = (0..table.dim).map(|j| format!("f{j}")).collect();
            &default
        }
    };
    if columns.len() != table.dim {
        return Err(Error::DimensionMismatch {
            context: "feature column names",
            expected: table.dim,
            actual: columns.len(),
        });
    }
    let mut s = String::from("patient_id");
    for c in columns {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (id, row) in &table.rows {
        s.push_str(id);
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    write_text(path, &s)
}

// ---------------------------------------------------------------- clinical

fn line_of_key(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

/// Parses one per-patient clinical object. A `patient_id` key, when present,
/// names the patient; otherwise `default_id` is used.
pub fn parse_clinical(path: &Path, text: &str, default_id: &str) -> Result<RawClinical> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let serde_json::Value::Object(map) = value else {
        return Err(Error::parse(path, 1, "expected a JSON object"));
    };
    let mut patient_id = default_id.to_string();
    let mut values = BTreeMap::new();
    for (key, v) in map {
        if key == "patient_id" {
            patient_id = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                _ => {
                    return Err(Error::parse(
                        path,
                        line_of_key(text, &key),
                        "patient_id must be a string",
                    ))
                }
            };
            continue;
        }
        let raw = match v {
            serde_json::Value::Null => RawValue::Missing,
            serde_json::Value::Bool(b) => RawValue::Bool(b),
            serde_json::Value::Number(n) => RawValue::Number(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => RawValue::Text(s),
            _ => {
                return Err(Error::parse(
                    path,
                    line_of_key(text, &key),
                    format!("value of `{key}` is nested; clinical files must be flat"),
                ))
            }
        };
        values.insert(key, raw);
    }
    Ok(RawClinical { patient_id, values })
}

/// Reads every `*.json` file in `dir`, in file-name order.
pub fn read_clinical_dir(dir: &Path) -> Result<Vec<RawClinical>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    let mut out: Vec<RawClinical> = Vec::with_capacity(paths.len());
    let mut seen: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
    for p in paths {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let rec = parse_clinical(&p, &read_text(&p)?, &stem)?;
        if let Some(prev) = seen.insert(rec.patient_id.clone(), p.clone()) {
            return Err(Error::parse(
                &p,
                1,
                format!("patient `{}` already defined by {}", rec.patient_id, prev.display()),
            ));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no .json files in {}", dir.display())));
    }
    Ok(out)
}

pub fn write_exclusions(path: &Path, excluded: &[Exclusion]) -> Result<()> {
    let mut s = String::from("patient_id,key,reason\n");
    for e in excluded {
        writeln!(s, "{},{},{}", e.patient_id, e.key, e.reason.replace(',', ";")).unwrap();
    }
    write_text(path, &s)
}

pub fn write_join_report(path: &Path, report: &JoinReport) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "labelled patients: {}", report.n_records).unwrap();
    for (name, rows, matched) in &report.per_modality {
        writeln!(s, "modality {name}: {rows} rows, {matched} matching a label").unwrap();
    }
    writeln!(s, "complete cases: {}", report.joined).unwrap();
    writeln!(s, "dropped: {}", report.dropped.len()).unwrap();
    for (id, missing) in &report.dropped {
        writeln!(s, "  {id} missing {}", missing.join(",")).unwrap();
    }
    write_text(path, &s)
}

// ---------------------------------------------------------------- folds

/// Writes `# k=<k> seed=<seed>` then `patient_id,fold` rows.
pub fn write_folds(path: &Path, folds: &FoldAssignment) -> Result<()> {
    let mut s = format!("# k={} seed={}\npatient_id,fold\n", folds.k, folds.seed);
    for (id, f) in &folds.folds {
        writeln!(s, "{id},{f}").unwrap();
    }
    write_text(path, &s)
}

pub fn read_folds(path: &Path) -> Result<FoldAssignment> {
    let text = read_text(path)?;
    let first = text.lines().next().unwrap_or("");
    let meta: BTreeMap<&str, &str> = first
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(path, 1, "missing `# k=.. seed=..` line"))?
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let get = |key: &str| -> Result<u64> {
        meta.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, format!("missing or invalid `{key}`")))
    };
    let k = get("k")? as usize;
    let seed = get("seed")?;
    let (header, rows) = read_csv(path, true)?;
    expect_header(path, &header, &["patient_id", "fold"])?;
    let mut folds = BTreeMap::new();
    for (line, rec) in rows {
        let f: usize = rec
            .get(1)
            .and_then(|v| v.parse().ok())
            .filter(|&f| f < k)
            .ok_or_else(|| Error::parse(path, line, format!("fold must be an integer below {k}")))?;
        if folds.insert(rec[0].to_string(), f).is_some() {
            return Err(Error::parse(path, line, format!("patient `{}` listed twice", &rec[0])));
        }
    }
    Ok(FoldAssignment { k, seed, folds })
}

// ---------------------------------------------------------------- results

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub subset: String,
    pub mean_c: f64,
    pub std_c: f64,
    pub n_models: usize,
}

pub fn write_results(path: &Path, rows: &[SubsetRow]) -> Result<()> {
    let mut s = String::from("subset,mean_c,std_c,n_models\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.subset, r.mean_c, r.std_c, r.n_models).unwrap();
    }
    write_text(path, &s)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let (header, rows) = read_csv(path, false)?;
    expect_header(path, &header, &["subset", "mean_c", "std_c", "n_models"])?;
    rows.into_iter()
        .map(|(line, rec)| {
            Ok(ResultRecord {
                subset: rec[0].to_string(),
                mean_c: parse_f64(path, line, &rec[1], "mean_c")?,
                std_c: parse_f64(path, line, &rec[2], "std_c")?,
                n_models: rec[3]
                    .parse()
                    .map_err(|_| Error::parse(path, line, "n_models must be an integer"))?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- predictions

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub patient_id: String,
    pub expected_time: f64,
    pub risk: f64,
    /// Survival probability at the end of each bin.
    pub survival: Vec<f64>,
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let k = predictions.first().map_or(0, |p| p.survival.len());
    if predictions.iter().any(|p| p.survival.len() != k) {
        return Err(Error::InvalidArgument("survival curves differ in length".into()));
    }
    let mut s = String::from("patient_id,expected_time_months,risk");
    for j in 0..k {
        write!(s, ",s{j}").unwrap();
    }
    s.push('\n');
    for p in predictions {
        write!(s, "{},{},{}", p.patient_id, p.expected_time, p.risk).unwrap();
        for v in &p.survival {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let (header, rows) = read_csv(path, false)?;
    expect_header(path, &header, &["patient_id", "expected_time_months", "risk"])?;
    rows.into_iter()
        .map(|(line, rec)| {
            if rec.len() != header.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            Ok(Prediction {
                patient_id: rec[0].to_string(),
                expected_time: parse_f64(path, line, &rec[1], "expected_time_months")?,
                risk: parse_f64(path, line, &rec[2], "risk")?,
                survival: (3..rec.len())
                    .map(|j| parse_f64(path, line, &rec[j], &header[j]))
                    .collect::<Result<Vec<_>>>()?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- flat numeric files

fn push_numbers(s: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            s.push(' ');
        }
        first = false;
        write!(s, "{v}").unwrap();
    }
    s.push('\n');
}

/// Line cursor over a flat numeric file that tracks line numbers.
struct Flat<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Flat<'a> {
    fn open(path: &'a Path, text: &'a str, kind: &str) -> Result<Self> {
        let mut flat = Flat {
            path,
            lines: text.lines().enumerate(),
        };
        let (line, header) = flat.next()?;
        let expected = format!("# modalsurv {kind} v1");
        if header != expected {
            return Err(Error::parse(
                path,
                line,
                format!("expected `{expected}`, found `{header}`"),
            ));
        }
        Ok(flat)
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.lines.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                return Ok((i + 1, l));
            }
        }
        Err(Error::parse(self.path, 0, "unexpected end of file"))
    }

    fn numbers(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (line, l) = self.next()?;
        let v = l
            .split_whitespace()
            .map(|t| parse_f64(self.path, line, t, "value"))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != expected {
            return Err(Error::parse(
                self.path,
                line,
                format!("expected {expected} values, found {}", v.len()),
            ));
        }
        Ok(v)
    }

    /// `key v1 v2 ...` with integer values.
    fn keyed(&mut self, key: &str) -> Result<Vec<usize>> {
        let (line, l) = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::parse(self.path, line, format!("expected `{key}` line")));
        }
        parts
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(self.path, line, format!("`{t}` is not a count")))
            })
            .collect()
    }

    fn keyed_str(&mut self, key: &str) -> Result<&'a str> {
        let (line, l) = self.next()?;
        l.strip_prefix(key)
            .filter(|rest| rest.is_empty() || rest.starts_with(' '))
            .map(str::trim)
            .ok_or_else(|| Error::parse(self.path, line, format!("expected `{key}` line")))
    }

    fn keyed_one(&mut self, key: &str) -> Result<usize> {
        let (line, _) = self.peek_line();
        let v = self.keyed(key)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::parse(self.path, line, format!("`{key}` takes one value"))),
        }
    }

    fn peek_line(&self) -> (usize, &'a str) {
        let mut it = self.lines.clone();
        it.find(|(_, l)| !l.trim().is_empty())
            .map_or((0, ""), |(i, l)| (i + 1, l))
    }
}

/// Time grid as `# modalsurv grid v1` followed by one edge per line.
pub fn write_grid(path: &Path, grid: &TimeGrid) -> Result<()> {
    let mut s = String::from("# modalsurv grid v1\n");
    for e in grid.edges() {
        writeln!(s, "{e}").unwrap();
    }
    write_text(path, &s)
}

pub fn read_grid(path: &Path) -> Result<TimeGrid> {
    let text = read_text(path)?;
    let mut flat = Flat::open(path, &text, "grid")?;
    let mut edges = Vec::new();
    while let Ok((line, l)) = flat.next() {
        edges.push(parse_f64(path, line, l, "edge")?);
    }
    TimeGrid::from_edges(edges).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Standardizer as dimension, means, stds.
pub fn write_standardizer(path: &Path, std: &Standardizer) -> Result<()> {
    let mut s = format!("# modalsurv standardizer v1\ndim {}\n", std.dim());
    push_numbers(&mut s, std.means.iter().copied());
    push_numbers(&mut s, std.stds.iter().copied());
    write_text(path, &s)
}

pub fn read_standardizer(path: &Path) -> Result<Standardizer> {
    let text = read_text(path)?;
    let mut flat = Flat::open(path, &text, "standardizer")?;
    let d = flat.keyed_one("dim")?;
    Ok(Standardizer {
        means: flat.numbers(d)?,
        stds: flat.numbers(d)?,
    })
}

/// PCA model as shape, mean, component rows, explained variances.
pub fn write_pca(path: &Path, pca: &PcaModel) -> Result<()> {
    let (k, d) = pca.components.dim();
    let mut s = format!("# modalsurv pca v1\nshape {k} {d}\n");
    push_numbers(&mut s, pca.mean.iter().copied());
    for row in pca.components.rows() {
        push_numbers(&mut s, row.iter().copied());
    }
    push_numbers(&mut s, pca.explained_variance.iter().copied());
    write_text(path, &s)
}

pub fn read_pca(path: &Path) -> Result<PcaModel> {
    let text = read_text(path)?;
    let mut flat = Flat::open(path, &text, "pca")?;
    let shape = flat.keyed("shape")?;
    let &[k, d] = shape.as_slice() else {
        return Err(Error::parse(path, 2, "shape takes two values"));
    };
    let mean = flat.numbers(d)?;
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k {
        data.extend(flat.numbers(d)?);
    }
    Ok(PcaModel {
        mean,
        components: Array2::from_shape_vec((k, d), data).expect("counted"),
        explained_variance: flat.numbers(k)?,
    })
}

/// Cox coefficients plus the feature columns they apply to.
pub fn write_cox(path: &Path, model: &CoxModel, columns: &[usize]) -> Result<()> {
    let mut s = format!("# modalsurv coxph v1\ndim {}\ncolumns", model.beta.len());
    for c in columns {
        write!(s, " {c}").unwrap();
    }
    s.push('\n');
    writeln!(s, "ridge {}", model.ridge).unwrap();
    push_numbers(&mut s, model.beta.iter().copied());
    write_text(path, &s)
}

/// Returns `(beta, columns, ridge)`.
pub fn read_cox(path: &Path) -> Result<(Vec<f64>, Vec<usize>, f64)> {
    let text = read_text(path)?;
    let mut flat = Flat::open(path, &text, "coxph")?;
    let d = flat.keyed_one("dim")?;
    let columns = flat.keyed("columns")?;
    let (line, _) = flat.peek_line();
    let ridge = parse_f64(path, line, flat.keyed_str("ridge")?, "ridge")?;
    Ok((flat.numbers(d)?, columns, ridge))
}

/// Trained parameters with the metadata needed to rebuild and check them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub params: ModelParams,
    pub seed: u64,
    /// File name of the time grid the model was trained on.
    pub grid: String,
}

pub fn write_params(path: &Path, file: &ParamsFile) -> Result<()> {
    let p = &file.params;
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut s = String::from("# modalsurv params v1\n");
    writeln!(s, "modality_dims {}", list(&p.modality_dims())).unwrap();
    writeln!(s, "embed_dim {}", p.embed_dim()).unwrap();
    writeln!(s, "hidden_widths {}", list(&p.hidden_widths())).unwrap();
    writeln!(s, "n_bins {}", p.n_bins()).unwrap();
    writeln!(s, "seed {}", file.seed).unwrap();
    writeln!(s, "grid {}", file.grid).unwrap();
    for ((name, (r, c)), data) in p.tensor_names().iter().zip(p.tensor_shapes()).zip(p.tensors()) {
        writeln!(s, "tensor {name} {r} {c}").unwrap();
        push_numbers(&mut s, data.iter().copied());
    }
    write_text(path, &s)
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    let text = read_text(path)?;
    let mut flat = Flat::open(path, &text, "params")?;
    let dims = flat.keyed("modality_dims")?;
    let embed = flat.keyed_one("embed_dim")?;
    let widths = flat.keyed("hidden_widths")?;
    let n_bins = flat.keyed_one("n_bins")?;
    let (line, _) = flat.peek_line();
    let seed: u64 = flat
        .keyed_str("seed")?
        .parse()
        .map_err(|_| Error::parse(path, line, "seed must be an integer"))?;
    let grid = flat.keyed_str("grid")?.to_string();
    let n_tensors = 2 * dims.len() + 3 + 2 * widths.len() + 2;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let (line, header) = flat.next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let shape = match parts.as_slice() {
            ["tensor", _, r, c] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        }
        .ok_or_else(|| Error::parse(path, line, "expected `tensor <name> <rows> <cols>`"))?;
        tensors.push((shape, flat.numbers(shape.0 * shape.1)?));
    }
    let params = ModelParams::from_tensors(dims.len(), widths.len(), tensors)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    if params.modality_dims() != dims
        || params.embed_dim() != embed
        || params.hidden_widths() != widths
        || params.n_bins() != n_bins
    {
        return Err(Error::parse(path, 0, "tensor shapes disagree with the header"));
    }
    Ok(ParamsFile { params, seed, grid })
}
