//! Long-format table loading and wearable-sensor derivation recipes.
//!
//! Two recipes ship as presets: a heart-rate threshold treatment with
//! activity-class outcomes (PAMAP2 layout) and a locomotion-set treatment
//! (mHealth layout).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DecisionRow, PanelDataset, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    #[default]
    Comma,
    Semicolon,
    Tab,
    /// Any run of spaces or tabs.
    Whitespace,
}

impl Delimiter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "," | "comma" => Ok(Self::Comma),
            ";" | "semicolon" => Ok(Self::Semicolon),
            "\t" | "tab" => Ok(Self::Tab),
            " " | "space" | "whitespace" => Ok(Self::Whitespace),
            other => Err(Error::Config(format!("unsupported delimiter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    /// Subject column; when unset, `LongTableSpec::subject_id` names the whole file.
    pub subject: Option<String>,
    /// Time column; when unset, row order is used.
    pub time: Option<String>,
    pub outcome: Option<String>,
    pub treatment: Option<String>,
    /// Activity label column (text or integer codes).
    pub activity: Option<String>,
    pub heart_rate: Option<String>,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTableSpec {
    pub path: PathBuf,
    pub column_map: ColumnMap,
    pub delimiter: Delimiter,
    pub na_tokens: Vec<String>,
    /// Column names for headerless files, in positional order.
    pub positional_names: Option<Vec<String>>,
    /// Constant subject identifier for files holding one subject.
    pub subject_id: Option<String>,
}

pub fn default_na_tokens() -> Vec<String> {
    vec!["NaN".into(), "NA".into(), String::new()]
}

impl LongTableSpec {
    pub fn new(path: impl Into<PathBuf>, column_map: ColumnMap) -> Self {
        Self {
            path: path.into(),
            column_map,
            delimiter: Delimiter::Comma,
            na_tokens: default_na_tokens(),
            positional_names: None,
            subject_id: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.column_map.subject.is_none() && self.subject_id.is_none() {
            return Err(Error::Config(
                "table spec needs a subject column or a constant subject id".into(),
            ));
        }
        if self.column_map.covariates.is_empty() {
            return Err(Error::Config("table spec needs at least one covariate".into()));
        }
        Ok(())
    }

    /// Numeric columns in load order: time, outcome, treatment, heart rate, covariates.
    fn numeric_columns(&self) -> Vec<String> {
        let m = &self.column_map;
        let mut out: Vec<String> = Vec::new();
        for c in [&m.time, &m.outcome, &m.treatment, &m.heart_rate].into_iter().flatten() {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        for c in &m.covariates {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    /// 1-based line number in the source file.
    pub line: usize,
    pub subject: String,
    pub activity: Option<String>,
    /// Values of `RawTable::columns`; `None` marks a missing cell.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn n_missing(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.values.iter().filter(|v| v.is_none()).count())
            .sum()
    }

    /// Appends another table with identical columns.
    pub fn extend(&mut self, other: RawTable) -> Result<()> {
        if self.columns != other.columns {
            return Err(Error::Config("cannot merge tables with different columns".into()));
        }
        self.rows.extend(other.rows);
        Ok(())
    }
}

/// Reads a delimited table, mapping NA tokens to missing and preserving row order.
pub fn load_long_table(spec: &LongTableSpec) -> Result<RawTable> {
    spec.check()?;
    let path = &spec.path;
    let records: Vec<(usize, Vec<String>)> = match spec.delimiter {
        Delimiter::Whitespace => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut out = Vec::new();
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push((i + 1, line.split_whitespace().map(str::to_string).collect()));
            }
            out
        }
        d => {
            let byte = match d {
                Delimiter::Comma => b',',
                Delimiter::Semicolon => b';',
                Delimiter::Tab => b'\t',
                Delimiter::Whitespace => unreachable!(),
            };
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(byte)
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| csv_err(path, e))?;
            let mut out = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| csv_err(path, e))?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                out.push((line, rec.iter().map(str::to_string).collect()));
            }
            out
        }
    };

    let (header, body): (Vec<String>, &[(usize, Vec<String>)]) = match &spec.positional_names {
        Some(names) => (names.clone(), &records[..]),
        None => {
            let (first, rest) = records
                .split_first()
                .ok_or_else(|| Error::Data(format!("{} is empty; a header row is required", path.display())))?;
            (first.1.clone(), rest)
        }
    };
    let find = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
            path: path.clone(),
        })
    };
    let columns = spec.numeric_columns();
    let idx = columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let subject_idx = spec.column_map.subject.as_deref().map(find).transpose()?;
    let activity_idx = spec.column_map.activity.as_deref().map(find).transpose()?;

    let mut rows = Vec::with_capacity(body.len());
    for (line, rec) in body {
        let cell = |j: usize| rec.get(j).map(String::as_str).unwrap_or("");
        let mut values = Vec::with_capacity(idx.len());
        for (k, &j) in idx.iter().enumerate() {
            let raw = cell(j);
            if spec.na_tokens.iter().any(|t| t == raw) {
                values.push(None);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line: *line,
                column: columns[k].clone(),
                value: raw.to_string(),
            })?;
            values.push(if v.is_nan() { None } else { Some(v) });
        }
        let subject = match subject_idx {
            Some(j) => cell(j).to_string(),
            None => spec.subject_id.clone().expect("checked"),
        };
        let activity = activity_idx
            .map(|j| cell(j).to_string())
            .filter(|a| !spec.na_tokens.contains(a));
        rows.push(RawRow {
            line: *line,
            subject,
            activity,
            values,
        });
    }
    Ok(RawTable { columns, rows })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: malformed delimited input: {other:?}", path.display())),
    }
}

/// Loads several single-subject files that share one layout.
pub fn load_long_tables(specs: &[LongTableSpec]) -> Result<RawTable> {
    let mut iter = specs.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Config("no input files".into()))?;
    let mut table = load_long_table(first)?;
    for s in iter {
        table.extend(load_long_table(s)?)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OutcomeRule {
    FromColumn,
    /// `Y = 0` for sedentary labels, `1` for every other retained label.
    ActivityClass { sedentary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TreatmentRule {
    FromColumn,
    /// `A = 1` iff heart rate is strictly above `cutoff`.
    HrThreshold { cutoff: f64 },
    LocomotionSet { labels: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrInterpolation {
    Linear,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationRecipe {
    pub outcome_rule: OutcomeRule,
    pub treatment_rule: TreatmentRule,
    pub hr_interpolation: HrInterpolation,
    pub downsample_stride: usize,
    /// Activity labels removed before derivation (transient/null class).
    pub drop_labels: Vec<String>,
}

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl DerivationRecipe {
    /// Sedentary = lying, sitting, standing, watching TV, computer work, car driving;
    /// treatment = heart rate above 100 bpm.
    pub fn pamap2() -> Self {
        Self {
            outcome_rule: OutcomeRule::ActivityClass {
                sedentary: labels(&[
                    "1", "2", "3", "9", "10", "11", "lying", "sitting", "standing", "watching TV",
                    "computer work", "car driving",
                ]),
            },
            treatment_rule: TreatmentRule::HrThreshold { cutoff: 100.0 },
            hr_interpolation: HrInterpolation::Linear,
            downsample_stride: 1,
            drop_labels: labels(&["0"]),
        }
    }

    /// Sedentary = standing still, sitting, lying; treatment = walking, cycling, jogging, running.
    pub fn mhealth() -> Self {
        Self {
            outcome_rule: OutcomeRule::ActivityClass {
                sedentary: labels(&["1", "2", "3", "standing", "sitting", "lying"]),
            },
            treatment_rule: TreatmentRule::LocomotionSet {
                labels: labels(&["4", "9", "10", "11", "walking", "cycling", "jogging", "running"]),
            },
            hr_interpolation: HrInterpolation::None,
            downsample_stride: 1,
            drop_labels: labels(&["0"]),
        }
    }

    fn check(&self, spec: &LongTableSpec) -> Result<()> {
        let m = &spec.column_map;
        if self.downsample_stride == 0 {
            return Err(Error::Config("downsample stride must be >= 1".into()));
        }
        if matches!(self.treatment_rule, TreatmentRule::HrThreshold { .. }) && m.heart_rate.is_none() {
            return Err(Error::Config("hr-threshold treatment needs a heart-rate column".into()));
        }
        if matches!(self.treatment_rule, TreatmentRule::FromColumn) && m.treatment.is_none() {
            return Err(Error::Config("from-column treatment needs a treatment column".into()));
        }
        if matches!(self.outcome_rule, OutcomeRule::FromColumn) && m.outcome.is_none() {
            return Err(Error::Config("from-column outcome needs an outcome column".into()));
        }
        let needs_activity = matches!(self.outcome_rule, OutcomeRule::ActivityClass { .. })
            || matches!(self.treatment_rule, TreatmentRule::LocomotionSet { .. });
        if needs_activity && m.activity.is_none() {
            return Err(Error::Config("activity-based rules need an activity column".into()));
        }
        Ok(())
    }
}

/// Integer-valued codes compare equal regardless of formatting ("4" == "4.0").
fn normalize_label(s: &str) -> String {
    match s.trim().parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.is_finite() => format!("{}", v as i64),
        _ => s.trim().to_string(),
    }
}

fn in_set(label: &str, set: &[String]) -> bool {
    let l = normalize_label(label);
    set.iter().any(|s| normalize_label(s) == l)
}

/// Fills interior missing runs by linear interpolation in `x`; leading and trailing gaps stay missing.
pub fn interpolate_linear(x: &[f64], v: &mut [Option<f64>]) {
    let mut last: Option<usize> = None;
    for i in 0..v.len() {
        if v[i].is_some() {
            if let Some(l) = last {
                if i > l + 1 {
                    let (x0, y0) = (x[l], v[l].expect("observed"));
                    let (x1, y1) = (x[i], v[i].expect("observed"));
                    for j in l + 1..i {
                        let frac = if x1 == x0 { 0.5 } else { (x[j] - x0) / (x1 - x0) };
                        v[j] = Some(y0 + frac * (y1 - y0));
                    }
                }
            }
            last = Some(i);
        }
    }
}

/// Applies `recipe` per subject and assembles the panel.
///
/// Subjects with no usable rows are dropped and listed under the
/// `dropped_subjects` metadata key.
pub fn derive_panel(raw: &RawTable, recipe: &DerivationRecipe, spec: &LongTableSpec) -> Result<PanelDataset> {
    recipe.check(spec)?;
    let m = &spec.column_map;
    let col = |name: &Option<String>| name.as_deref().and_then(|n| raw.column(n));
    let time_j = col(&m.time);
    let hr_j = col(&m.heart_rate);
    let y_j = col(&m.outcome);
    let a_j = col(&m.treatment);
    let cov_j = m
        .covariates
        .iter()
        .map(|c| {
            raw.column(c).ok_or_else(|| Error::Schema {
                column: c.clone(),
                path: spec.path.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RawRow>> = BTreeMap::new();
    for r in &raw.rows {
        if !groups.contains_key(&r.subject) {
            order.push(r.subject.clone());
        }
        groups.entry(r.subject.clone()).or_default().push(r);
    }

    let mut panel = PanelDataset::new(m.covariates.clone());
    let mut dropped = Vec::new();
    for sid in order {
        let mut rows = groups.remove(&sid).expect("grouped");
        let times: Vec<f64> = match time_j {
            Some(j) => {
                if let Some(r) = rows.iter().find(|r| r.values[j].is_none()) {
                    return Err(Error::Data(format!(
                        "{}:{}: missing time value",
                        spec.path.display(),
                        r.line
                    )));
                }
                rows.sort_by(|a, b| a.values[j].unwrap().total_cmp(&b.values[j].unwrap()));
                rows.iter().map(|r| r.values[j].unwrap()).collect()
            }
            None => (0..rows.len()).map(|i| i as f64).collect(),
        };
        let mut values: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.values.clone()).collect();
        if let (Some(j), HrInterpolation::Linear) = (hr_j, recipe.hr_interpolation) {
            let mut hr: Vec<Option<f64>> = values.iter().map(|v| v[j]).collect();
            interpolate_linear(&times, &mut hr);
            for (v, h) in values.iter_mut().zip(hr) {
                v[j] = h;
            }
        }

        let mut out: Vec<DecisionRow> = Vec::new();
        for (r, v) in rows.iter().zip(&values) {
            let label = r.activity.as_deref();
            if let Some(l) = label {
                if in_set(l, &recipe.drop_labels) {
                    continue;
                }
            }
            let y = match &recipe.outcome_rule {
                OutcomeRule::FromColumn => v[y_j.expect("checked")],
                OutcomeRule::ActivityClass { sedentary } => {
                    label.map(|l| if in_set(l, sedentary) { 0.0 } else { 1.0 })
                }
            };
            let a = match &recipe.treatment_rule {
                TreatmentRule::FromColumn => v[a_j.expect("checked")],
                TreatmentRule::HrThreshold { cutoff } => {
                    v[hr_j.expect("checked")].map(|h| if h > *cutoff { 1.0 } else { 0.0 })
                }
                TreatmentRule::LocomotionSet { labels } => {
                    label.map(|l| if in_set(l, labels) { 1.0 } else { 0.0 })
                }
            };
            let covs: Option<Vec<f64>> = cov_j.iter().map(|&j| v[j]).collect();
            let (Some(y), Some(a), Some(covariates)) = (y, a, covs) else {
                continue;
            };
            for (name, val) in [("outcome", y), ("treatment", a)] {
                if val != 0.0 && val != 1.0 {
                    return Err(Error::Data(format!(
                        "{}:{}: {name} value {val} is not binary",
                        spec.path.display(),
                        r.line
                    )));
                }
            }
            out.push(DecisionRow {
                t: 0,
                a: a as u8,
                y: y as u8,
                available: 1,
                covariates,
                p_known: None,
            });
        }
        let mut kept: Vec<DecisionRow> = out.into_iter().step_by(recipe.downsample_stride).collect();
        for (i, r) in kept.iter_mut().enumerate() {
            r.t = i as u32 + 1;
        }
        if kept.is_empty() {
            dropped.push(sid);
        } else {
            panel.subjects.push(SubjectRecord {
                subject_id: sid,
                rows: kept,
            });
        }
    }
    if panel.subjects.is_empty() {
        return Err(Error::Data("every subject was dropped during derivation".into()));
    }
    if !dropped.is_empty() {
        panel.meta.insert("dropped_subjects".into(), dropped.join(","));
    }
    panel.meta.insert("source".into(), spec.path.display().to_string());
    Ok(panel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioId {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            "S4" => Ok(Self::S4),
            other => Err(Error::Config(format!("unknown scenario `{other}`; expected S1, S2, S3, S4"))),
        }
    }

    /// Whether a covariate belongs to this variant: S1 everything, S2 chest,
    /// S3 chest and ankle, S4 everything except heart signals.
    pub fn keeps(&self, name: &str) -> bool {
        let n = name.to_ascii_lowercase();
        match self {
            Self::S1 => true,
            Self::S2 => n.contains("chest"),
            Self::S3 => n.contains("chest") || n.contains("ankle"),
            Self::S4 => !(n.contains("heart") || n.contains("ecg")),
        }
    }
}

/// Restricts the panel's covariates to the scenario's declared set.
pub fn scenario_slices(panel: &PanelDataset, id: ScenarioId) -> Result<PanelDataset> {
    let keep: Vec<String> = panel
        .covariate_names
        .iter()
        .filter(|c| id.keeps(c))
        .cloned()
        .collect();
    if keep.is_empty() {
        return Err(Error::Config(format!("scenario {id:?} keeps no covariates of this panel")));
    }
    let mut out = panel.select_covariates(&keep)?;
    out.meta.insert("scenario".into(), format!("{id:?}"));
    Ok(out)
}

/// Column names of a PAMAP2 `.dat` file (headerless, space separated).
pub fn pamap2_columns() -> Vec<String> {
    let mut cols = labels(&["timestamp", "activity_id", "heart_rate"]);
    for unit in ["hand", "chest", "ankle"] {
        cols.push(format!("{unit}_temp"));
        for sensor in ["acc16", "acc6", "gyro", "mag"] {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{unit}_{sensor}_{axis}"));
            }
        }
        for k in 1..=4 {
            cols.push(format!("{unit}_orient_{k}"));
        }
    }
    cols
}

/// Column names of an mHealth `.log` file (headerless, whitespace separated).
pub fn mhealth_columns() -> Vec<String> {
    let mut cols = labels(&["chest_acc_x", "chest_acc_y", "chest_acc_z", "chest_ecg_1", "chest_ecg_2"]);
    for (unit, sensors) in [("ankle", ["acc", "gyro", "mag"]), ("arm", ["acc", "gyro", "mag"])] {
        for s in sensors {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{unit}_{s}_{axis}"));
            }
        }
    }
    cols.push("activity".into());
    cols
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Spec for one PAMAP2 subject file; the subject id is the file stem.
pub fn pamap2_spec(path: impl Into<PathBuf>) -> LongTableSpec {
    let path = path.into();
    let mut covariates = labels(&["heart_rate"]);
    for unit in ["hand", "chest", "ankle"] {
        covariates.push(format!("{unit}_temp"));
        for axis in ["x", "y", "z"] {
            covariates.push(format!("{unit}_acc16_{axis}"));
        }
    }
    LongTableSpec {
        subject_id: Some(file_stem(&path)),
        path,
        column_map: ColumnMap {
            time: Some("timestamp".into()),
            activity: Some("activity_id".into()),
            heart_rate: Some("heart_rate".into()),
            covariates,
            ..ColumnMap::default()
        },
        delimiter: Delimiter::Whitespace,
        na_tokens: default_na_tokens(),
        positional_names: Some(pamap2_columns()),
    }
}

/// Spec for one mHealth subject file; rows are in time order at a fixed rate.
pub fn mhealth_spec(path: impl Into<PathBuf>) -> LongTableSpec {
    let path = path.into();
    let mut covariates = labels(&["chest_acc_x", "chest_acc_y", "chest_acc_z", "chest_ecg_1", "chest_ecg_2"]);
    for unit in ["ankle", "arm"] {
        for axis in ["x", "y", "z"] {
            covariates.push(format!("{unit}_acc_{axis}"));
        }
    }
    LongTableSpec {
        subject_id: Some(file_stem(&path)),
        path,
        column_map: ColumnMap {
            activity: Some("activity".into()),
            covariates,
            ..ColumnMap::default()
        },
        delimiter: Delimiter::Whitespace,
        na_tokens: default_na_tokens(),
        positional_names: Some(mhealth_columns()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pamap2,
    Mhealth,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pamap2" => Ok(Self::Pamap2),
            "mhealth" => Ok(Self::Mhealth),
            other => Err(Error::Config(format!("unknown recipe `{other}`; expected pamap2 or mhealth"))),
        }
    }

    pub fn spec(&self, path: impl Into<PathBuf>) -> LongTableSpec {
        match self {
            Self::Pamap2 => pamap2_spec(path),
            Self::Mhealth => mhealth_spec(path),
        }
    }

    pub fn recipe(&self) -> DerivationRecipe {
        match self {
            Self::Pamap2 => DerivationRecipe::pamap2(),
            Self::Mhealth => DerivationRecipe::mhealth(),
        }
    }

    /// File extension of the per-subject files.
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Pamap2 => "dat",
            Self::Mhealth => "log",
        }
    }
}

/// Per-subject files under `dir` with the preset's extension, sorted by name.
pub fn preset_files(dir: &Path, preset: Preset) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == preset.extension()))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!(
            "no .{} files in {}",
            preset.extension(),
            dir.display()
        )));
    }
    Ok(files)
}

/// Loads every subject file of a preset dataset and derives the panel.
pub fn load_preset(paths: &[PathBuf], preset: Preset, stride: usize) -> Result<PanelDataset> {
    let specs: Vec<LongTableSpec> = paths.iter().map(|p| preset.spec(p)).collect();
    let raw = load_long_tables(&specs)?;
    let recipe = DerivationRecipe {
        downsample_stride: stride,
        ..preset.recipe()
    };
    let mut panel = derive_panel(&raw, &recipe, &specs[0])?;
    panel.meta.insert("recipe".into(), format!("{preset:?}").to_lowercase());
    panel.meta.remove("source");
    Ok(panel)
}
