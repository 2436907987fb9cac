//! Long-format panel representation of a micro-randomized trial.
//!
//! A [`PanelDataset`] holds one [`SubjectRecord`] per participant; each subject
//! carries its decision points in time order. Rows with availability `0` are
//! kept for provenance but excluded from every fitting and estimating step.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One decision point for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    /// 1-based decision index within the subject.
    pub t: u32,
    /// Treatment indicator.
    pub a: u8,
    /// Binary proximal outcome.
    pub y: u8,
    /// Availability indicator.
    pub available: u8,
    /// History covariates, ordered as `PanelDataset::covariate_names`.
    pub covariates: Vec<f64>,
    /// Design randomization probability, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_known: Option<f64>,
}

impl DecisionRow {
    pub fn is_available(&self) -> bool {
        self.available == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub rows: Vec<DecisionRow>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PanelDataset {
    pub subjects: Vec<SubjectRecord>,
    pub covariate_names: Vec<String>,
    /// Reduced covariate set used by the stabilizing numerator model.
    #[serde(default)]
    pub moderator_names: Vec<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// A single invariant violation located by subject, decision time, and field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subject_id: Option<String>,
    pub t: Option<u32>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.subject_id, self.t) {
            (Some(s), Some(t)) => write!(f, "subject {s}, t={t}, {}: {}", self.field, self.message),
            (Some(s), None) => write!(f, "subject {s}, {}: {}", self.field, self.message),
            _ => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Selected design columns, optionally preceded by an intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub columns: Vec<String>,
    pub intercept: bool,
}

impl ColumnSpec {
    pub fn new(columns: Vec<String>, intercept: bool) -> Self {
        Self { columns, intercept }
    }

    pub fn intercept_only() -> Self {
        Self {
            columns: Vec::new(),
            intercept: true,
        }
    }

    /// Number of design columns including the intercept.
    pub fn width(&self) -> usize {
        self.columns.len() + usize::from(self.intercept)
    }
}

impl PanelDataset {
    pub fn new(covariate_names: Vec<String>) -> Self {
        Self {
            covariate_names,
            ..Default::default()
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_rows(&self) -> usize {
        self.subjects.iter().map(|s| s.rows.len()).sum()
    }

    pub fn n_available(&self) -> usize {
        self.available_rows().count()
    }

    /// Available rows in (subject, t) order, paired with the subject's index.
    pub fn available_rows(&self) -> impl Iterator<Item = (usize, &DecisionRow)> + '_ {
        self.subjects.iter().enumerate().flat_map(|(g, s)| {
            s.rows
                .iter()
                .filter(|r| r.is_available())
                .map(move |r| (g, r))
        })
    }

    pub fn treatments(&self) -> Vec<f64> {
        self.available_rows().map(|(_, r)| f64::from(r.a)).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.available_rows().map(|(_, r)| f64::from(r.y)).collect()
    }

    /// Subject index of every available row.
    pub fn cluster_index(&self) -> Vec<usize> {
        self.available_rows().map(|(g, _)| g).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown column `{name}`; available: [{}]",
                    self.covariate_names.join(", ")
                ))
            })
    }

    /// Design matrix over available rows in deterministic (subject, t) order.
    pub fn design_matrix(&self, columns: &[String], add_intercept: bool) -> Result<DMatrix<f64>> {
        let idx = columns
            .iter()
            .map(|c| self.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        let width = idx.len() + usize::from(add_intercept);
        let n = self.n_available();
        let mut x = DMatrix::<f64>::zeros(n, width);
        for (i, (_, row)) in self.available_rows().enumerate() {
            let mut j = 0;
            if add_intercept {
                x[(i, 0)] = 1.0;
                j = 1;
            }
            for (k, &c) in idx.iter().enumerate() {
                x[(i, j + k)] = row.covariates[c];
            }
        }
        Ok(x)
    }

    pub fn design_for(&self, spec: &ColumnSpec) -> Result<DMatrix<f64>> {
        self.design_matrix(&spec.columns, spec.intercept)
    }

    /// Returns every structural invariant violation; empty iff the panel is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let width = self.covariate_names.len();

        let mut seen_names = HashSet::new();
        for name in &self.covariate_names {
            if !seen_names.insert(name.as_str()) {
                out.push(Violation {
                    subject_id: None,
                    t: None,
                    field: "covariate_names".into(),
                    message: format!("duplicate covariate name `{name}`"),
                });
            }
        }
        for m in &self.moderator_names {
            if !self.covariate_names.contains(m) {
                out.push(Violation {
                    subject_id: None,
                    t: None,
                    field: "moderator_names".into(),
                    message: format!("moderator `{m}` is not a covariate"),
                });
            }
        }

        let mut seen_ids = HashSet::new();
        for subj in &self.subjects {
            let sid = Some(subj.subject_id.clone());
            if !seen_ids.insert(subj.subject_id.as_str()) {
                out.push(Violation {
                    subject_id: sid.clone(),
                    t: None,
                    field: "subject_id".into(),
                    message: "duplicate subject id".into(),
                });
            }
            if subj.rows.is_empty() {
                out.push(Violation {
                    subject_id: sid.clone(),
                    t: None,
                    field: "rows".into(),
                    message: "subject has no decision points".into(),
                });
                continue;
            }
            if subj.rows[0].t != 1 {
                out.push(Violation {
                    subject_id: sid.clone(),
                    t: Some(subj.rows[0].t),
                    field: "t".into(),
                    message: "decision times must start at 1".into(),
                });
            }
            for pair in subj.rows.windows(2) {
                if pair[1].t <= pair[0].t {
                    out.push(Violation {
                        subject_id: sid.clone(),
                        t: Some(pair[1].t),
                        field: "t".into(),
                        message: format!("decision time not strictly increasing after t={}", pair[0].t),
                    });
                }
            }
            for row in &subj.rows {
                let at = |field: &str, message: String| Violation {
                    subject_id: sid.clone(),
                    t: Some(row.t),
                    field: field.into(),
                    message,
                };
                for (field, v) in [("A", row.a), ("Y", row.y), ("I", row.available)] {
                    if v > 1 {
                        out.push(at(field, format!("value {v} outside {{0,1}}")));
                    }
                }
                if let Some(p) = row.p_known {
                    if !(p > 0.0 && p < 1.0) {
                        out.push(at(
                            "p_known",
                            format!("probability {p} must lie in the open interval (0,1)"),
                        ));
                    }
                }
                if row.covariates.len() != width {
                    out.push(at(
                        "covariates",
                        format!("length {} differs from {} covariate names", row.covariates.len(), width),
                    ));
                }
                if let Some(k) = row.covariates.iter().position(|v| !v.is_finite()) {
                    let name = self.covariate_names.get(k).cloned().unwrap_or_else(|| k.to_string());
                    out.push(at("covariates", format!("non-finite value in `{name}`")));
                }
            }
        }
        out
    }

    /// Fails with a data error listing the first few violations.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = v.iter().take(5).map(ToString::to_string).collect();
        Err(Error::Data(format!(
            "panel has {} invariant violation(s): {}",
            v.len(),
            shown.join("; ")
        )))
    }

    /// Retains only the named covariates (in the given order); moderators are intersected.
    pub fn select_covariates(&self, keep: &[String]) -> Result<PanelDataset> {
        let idx = keep
            .iter()
            .map(|c| self.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        let subjects = self
            .subjects
            .iter()
            .map(|s| SubjectRecord {
                subject_id: s.subject_id.clone(),
                rows: s
                    .rows
                    .iter()
                    .map(|r| DecisionRow {
                        covariates: idx.iter().map(|&k| r.covariates[k]).collect(),
                        ..r.clone()
                    })
                    .collect(),
            })
            .collect();
        Ok(PanelDataset {
            subjects,
            covariate_names: keep.to_vec(),
            moderator_names: self
                .moderator_names
                .iter()
                .filter(|m| keep.contains(m))
                .cloned()
                .collect(),
            meta: self.meta.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes the panel archive document.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn row(t: u32, a: u8, y: u8, x: &[f64]) -> DecisionRow {
        DecisionRow {
            t,
            a,
            y,
            available: 1,
            covariates: x.to_vec(),
            p_known: Some(0.5),
        }
    }

    pub(crate) fn two_subject_panel() -> PanelDataset {
        PanelDataset {
            subjects: vec![
                SubjectRecord {
                    subject_id: "s1".into(),
                    rows: vec![row(1, 1, 1, &[0.5, 1.0]), row(2, 0, 0, &[-0.5, 2.0])],
                },
                SubjectRecord {
                    subject_id: "s2".into(),
                    rows: vec![row(1, 0, 1, &[1.5, 0.0]), row(2, 1, 0, &[0.0, -1.0])],
                },
            ],
            covariate_names: vec!["x1".into(), "x2".into()],
            moderator_names: vec!["x1".into()],
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn well_formed_panel_has_no_violations() {
        assert!(two_subject_panel().validate().is_empty());
    }

    #[test]
    fn out_of_domain_treatment_is_reported() {
        let mut p = two_subject_panel();
        p.subjects[0].rows[1].a = 2;
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "A");
        assert_eq!(v[0].subject_id.as_deref(), Some("s1"));
        assert_eq!(v[0].t, Some(2));
    }

    #[test]
    fn boundary_probability_is_reported() {
        let mut p = two_subject_panel();
        p.subjects[1].rows[0].p_known = Some(1.0);
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "p_known");
        assert!(v[0].message.contains("open interval"));
    }

    #[test]
    fn time_ordering_and_structure_violations() {
        let mut p = two_subject_panel();
        p.subjects[0].rows[1].t = 1;
        p.subjects[1].rows[0].covariates.push(3.0);
        p.subjects[1].rows[1].covariates[0] = f64::NAN;
        p.moderator_names.push("zzz".into());
        p.subjects.push(SubjectRecord {
            subject_id: "s1".into(),
            rows: vec![row(2, 0, 0, &[0.0, 0.0])],
        });
        let fields: Vec<_> = p.validate().into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"moderator_names".to_string()));
        assert!(fields.contains(&"subject_id".to_string()));
        assert_eq!(fields.iter().filter(|f| *f == "t").count(), 2);
        assert_eq!(fields.iter().filter(|f| *f == "covariates").count(), 2);
    }

    #[test]
    fn intercept_only_design() {
        let p = two_subject_panel();
        let x = p.design_matrix(&[], true).unwrap();
        assert_eq!(x.shape(), (4, 1));
        assert!(x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn full_design_stacks_covariates() {
        let p = two_subject_panel();
        let x = p.design_matrix(&p.covariate_names.clone(), false).unwrap();
        let expect = [[0.5, 1.0], [-0.5, 2.0], [1.5, 0.0], [0.0, -1.0]];
        for (i, r) in expect.iter().enumerate() {
            assert_eq!(x[(i, 0)], r[0]);
            assert_eq!(x[(i, 1)], r[1]);
        }
    }

    #[test]
    fn unavailable_rows_are_excluded() {
        let mut p = PanelDataset::new(vec!["x".into()]);
        p.subjects.push(SubjectRecord {
            subject_id: "a".into(),
            rows: vec![row(1, 1, 0, &[1.0]), row(2, 0, 1, &[2.0]), row(3, 1, 1, &[3.0])],
        });
        assert_eq!(p.design_matrix(&["x".into()], false).unwrap().nrows(), 3);
        p.subjects[0].rows[1].available = 0;
        let x = p.design_matrix(&["x".into()], false).unwrap();
        assert_eq!(x.nrows(), 2);
        assert_eq!((x[(0, 0)], x[(1, 0)]), (1.0, 3.0));
    }

    #[test]
    fn unknown_column_is_config_error() {
        let p = two_subject_panel();
        assert!(matches!(
            p.design_matrix(&["nope".into()], true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn design_matrix_is_deterministic() {
        let p = two_subject_panel();
        let a = p.design_matrix(&p.covariate_names.clone(), true).unwrap();
        let b = p.design_matrix(&p.covariate_names.clone(), true).unwrap();
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn archive_round_trip_is_exact() {
        let mut p = two_subject_panel();
        p.subjects[0].rows[0].covariates[0] = 0.1 + 0.2;
        p.subjects[0].rows[0].covariates[1] = std::f64::consts::PI * 1e-17;
        let back = PanelDataset::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
