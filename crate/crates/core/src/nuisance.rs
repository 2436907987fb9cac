//! Treatment, numerator, and outcome working models.
//!
//! All prediction vectors are aligned with [`PanelDataset::available_rows`].

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{clip_prob, fit_logistic_auto, predict_prob, LogisticModel, DEFAULT_RIDGE};
use crate::panel::{ColumnSpec, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceSource {
    DesignKnown,
    Fitted,
    CrossFitted,
}

/// Column choices for the three working models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    /// Treatment model p̂(H).
    pub treatment: ColumnSpec,
    /// Stabilizing numerator p̃(S).
    pub numerator: ColumnSpec,
    /// Arm-specific outcome models m̂ₐ(H).
    pub outcome: ColumnSpec,
    pub ridge_lambda: f64,
}

impl NuisanceSpec {
    /// Full covariate set for the treatment and outcome models, moderators for the numerator.
    pub fn for_panel(panel: &PanelDataset) -> Self {
        Self {
            treatment: ColumnSpec::new(panel.covariate_names.clone(), true),
            numerator: ColumnSpec::new(panel.moderator_names.clone(), true),
            outcome: ColumnSpec::new(panel.covariate_names.clone(), true),
            ridge_lambda: DEFAULT_RIDGE,
        }
    }
}

/// How nuisance predictions are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NuisanceMode {
    /// Known design probabilities; outcome model is a pooled-mean placeholder.
    Design,
    /// Known design probabilities with in-sample fitted outcome models.
    DesignOutcome,
    /// Every model fitted in-sample.
    Fit,
    /// K-fold cross-fitting by subject.
    CrossFit { k: usize, seed: u64 },
}

impl NuisanceMode {
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let s = s.trim();
        match s {
            "design" => Ok(Self::Design),
            "design+outcome" => Ok(Self::DesignOutcome),
            "fit" => Ok(Self::Fit),
            _ => {
                if let Some(k) = s.strip_prefix("crossfit:") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid fold count in `{s}`")))?;
                    Ok(Self::CrossFit { k, seed })
                } else if s == "crossfit" {
                    Ok(Self::CrossFit { k: 2, seed })
                } else {
                    Err(Error::Config(format!(
                        "unknown nuisance mode `{s}`; expected design, design+outcome, fit, or crossfit:K"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Design => "design".into(),
            Self::DesignOutcome => "design+outcome".into(),
            Self::Fit => "fit".into(),
            Self::CrossFit { k, .. } => format!("crossfit:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub p_hat: Vec<f64>,
    pub p_tilde: Vec<f64>,
    pub m1_hat: Vec<f64>,
    pub m0_hat: Vec<f64>,
    pub fold_assignment: Vec<usize>,
    pub source: NuisanceSource,
    /// False when m̂ is the pooled-mean placeholder.
    pub outcome_fitted: bool,
    pub spec: NuisanceSpec,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl NuisanceFits {
    pub fn len(&self) -> usize {
        self.p_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat.is_empty()
    }

    pub(crate) fn check_aligned(&self, panel: &PanelDataset) -> Result<()> {
        let n = panel.n_available();
        let lens = [
            self.p_hat.len(),
            self.p_tilde.len(),
            self.m1_hat.len(),
            self.m0_hat.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Config(format!(
                "nuisance predictions have lengths {lens:?}, panel has {n} available rows"
            )));
        }
        Ok(())
    }
}

/// Dispatches on `mode`.
pub fn estimate_nuisance(
    panel: &PanelDataset,
    spec: &NuisanceSpec,
    mode: NuisanceMode,
) -> Result<NuisanceFits> {
    match mode {
        NuisanceMode::Design => from_design(panel, spec),
        NuisanceMode::DesignOutcome => from_design_with_outcome(panel, spec),
        NuisanceMode::Fit => fit(panel, spec),
        NuisanceMode::CrossFit { k, seed } => cross_fit(panel, spec, k, seed),
    }
}

fn design_probs(panel: &PanelDataset) -> Result<Vec<f64>> {
    panel
        .available_rows()
        .map(|(g, r)| {
            r.p_known.ok_or_else(|| {
                Error::Data(format!(
                    "subject {}, t={}: p_known missing; design-known nuisance requires it",
                    panel.subjects[g].subject_id, r.t
                ))
            })
        })
        .collect()
}

/// Known design probabilities with a pooled-mean outcome placeholder.
pub fn from_design(panel: &PanelDataset, spec: &NuisanceSpec) -> Result<NuisanceFits> {
    let p_hat = design_probs(panel)?;
    let n = p_hat.len();
    if n == 0 {
        return Err(Error::Data("panel has no available rows".into()));
    }
    let a = panel.treatments();
    let p_tilde = if spec.numerator.columns.is_empty() {
        let mean = p_hat.iter().sum::<f64>() / n as f64;
        vec![clip_prob(mean); n]
    } else {
        let xs = panel.design_for(&spec.numerator)?;
        let m = fit_logistic_auto(&xs, &a, None, spec.ridge_lambda, spec.numerator.clone())?;
        predict_prob(&m, &xs)?
    };
    let y = panel.outcomes();
    let ybar = clip_prob(y.iter().sum::<f64>() / n as f64);
    Ok(NuisanceFits {
        p_hat,
        p_tilde,
        m1_hat: vec![ybar; n],
        m0_hat: vec![ybar; n],
        fold_assignment: vec![0; n],
        source: NuisanceSource::DesignKnown,
        outcome_fitted: false,
        spec: spec.clone(),
        warnings: Vec::new(),
    })
}

/// Known design probabilities with in-sample arm-specific outcome models.
pub fn from_design_with_outcome(panel: &PanelDataset, spec: &NuisanceSpec) -> Result<NuisanceFits> {
    let mut fits = from_design(panel, spec)?;
    let xo = panel.design_for(&spec.outcome)?;
    let a = panel.treatments();
    let y = panel.outcomes();
    let all: Vec<usize> = (0..a.len()).collect();
    let (m1, m0) = fit_outcome_pair(&xo, &a, &y, &all, spec, None)?;
    fits.m1_hat = predict_prob(&m1, &xo)?;
    fits.m0_hat = predict_prob(&m0, &xo)?;
    fits.outcome_fitted = true;
    Ok(fits)
}

/// Fits every working model on all available rows and predicts in-sample.
pub fn fit(panel: &PanelDataset, spec: &NuisanceSpec) -> Result<NuisanceFits> {
    let xt = panel.design_for(&spec.treatment)?;
    let xs = panel.design_for(&spec.numerator)?;
    let xo = panel.design_for(&spec.outcome)?;
    let a = panel.treatments();
    let y = panel.outcomes();
    let n = a.len();
    for arm in [0u8, 1] {
        if !a.iter().any(|&v| v == f64::from(arm)) {
            return Err(Error::DegenerateArm { arm });
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let models = fit_all(&xt, &xs, &xo, &a, &y, &all, spec, None)?;
    Ok(NuisanceFits {
        p_hat: predict_prob(&models.0, &xt)?,
        p_tilde: predict_prob(&models.1, &xs)?,
        m1_hat: predict_prob(&models.2, &xo)?,
        m0_hat: predict_prob(&models.3, &xo)?,
        fold_assignment: vec![0; n],
        source: NuisanceSource::Fitted,
        outcome_fitted: true,
        spec: spec.clone(),
        warnings: Vec::new(),
    })
}

/// Seeded shuffle of subjects into `k` folds; returns the fold of each subject.
pub fn subject_folds(n_subjects: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_subjects).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold = vec![0; n_subjects];
    for (pos, &s) in order.iter().enumerate() {
        fold[s] = pos % k;
    }
    fold
}

/// K-fold cross-fitting: each fold is predicted by models trained on the other folds.
pub fn cross_fit(panel: &PanelDataset, spec: &NuisanceSpec, k: usize, seed: u64) -> Result<NuisanceFits> {
    if k < 2 {
        return Err(Error::Config(format!("cross-fitting needs K >= 2, got {k}")));
    }
    if panel.n_subjects() < k {
        return Err(Error::Config(format!(
            "cross-fitting with K={k} needs at least {k} subjects, panel has {}",
            panel.n_subjects()
        )));
    }
    let xt = panel.design_for(&spec.treatment)?;
    let xs = panel.design_for(&spec.numerator)?;
    let xo = panel.design_for(&spec.outcome)?;
    let a = panel.treatments();
    let y = panel.outcomes();
    let n = a.len();

    let subj_fold = subject_folds(panel.n_subjects(), k, seed);
    let fold_assignment: Vec<usize> = panel.cluster_index().iter().map(|&g| subj_fold[g]).collect();

    let mut p_hat = vec![0.0; n];
    let mut p_tilde = vec![0.0; n];
    let mut m1_hat = vec![0.0; n];
    let mut m0_hat = vec![0.0; n];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold_assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_assignment[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let (mt, ms, m1, m0) = fit_all(&xt, &xs, &xo, &a, &y, &train, spec, Some(f))?;
        let pt = predict_prob(&mt, &rows(&xt, &test))?;
        let ps = predict_prob(&ms, &rows(&xs, &test))?;
        let q1 = predict_prob(&m1, &rows(&xo, &test))?;
        let q0 = predict_prob(&m0, &rows(&xo, &test))?;
        for (j, &i) in test.iter().enumerate() {
            p_hat[i] = pt[j];
            p_tilde[i] = ps[j];
            m1_hat[i] = q1[j];
            m0_hat[i] = q0[j];
        }
    }
    Ok(NuisanceFits {
        p_hat,
        p_tilde,
        m1_hat,
        m0_hat,
        fold_assignment,
        source: NuisanceSource::CrossFitted,
        outcome_fitted: true,
        spec: spec.clone(),
        warnings: Vec::new(),
    })
}

pub(crate) fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn two_class(v: &[f64]) -> bool {
    v.contains(&0.0) && v.contains(&1.0)
}

#[allow(clippy::too_many_arguments)]
fn fit_all(
    xt: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xo: &DMatrix<f64>,
    a: &[f64],
    y: &[f64],
    train: &[usize],
    spec: &NuisanceSpec,
    fold: Option<usize>,
) -> Result<(LogisticModel, LogisticModel, LogisticModel, LogisticModel)> {
    let at = pick(a, train);
    if let Some(f) = fold {
        if !two_class(&at) {
            return Err(Error::DegenerateFold { fold: f, model: "treatment" });
        }
    }
    let mt = fit_logistic_auto(&rows(xt, train), &at, None, spec.ridge_lambda, spec.treatment.clone())?;
    let ms = fit_logistic_auto(&rows(xs, train), &at, None, spec.ridge_lambda, spec.numerator.clone())?;
    let (m1, m0) = fit_outcome_pair(xo, a, y, train, spec, fold)?;
    Ok((mt, ms, m1, m0))
}

fn fit_outcome_pair(
    xo: &DMatrix<f64>,
    a: &[f64],
    y: &[f64],
    train: &[usize],
    spec: &NuisanceSpec,
    fold: Option<usize>,
) -> Result<(LogisticModel, LogisticModel)> {
    let mut out = Vec::with_capacity(2);
    for (arm, name) in [(1.0, "outcome (A=1)"), (0.0, "outcome (A=0)")] {
        let idx: Vec<usize> = train.iter().copied().filter(|&i| a[i] == arm).collect();
        if idx.is_empty() {
            return match fold {
                Some(f) => Err(Error::DegenerateFold { fold: f, model: name }),
                None => Err(Error::DegenerateArm { arm: arm as u8 }),
            };
        }
        let ya = pick(y, &idx);
        if let Some(f) = fold {
            if !two_class(&ya) {
                return Err(Error::DegenerateFold { fold: f, model: name });
            }
        }
        out.push(fit_logistic_auto(&rows(xo, &idx), &ya, None, spec.ridge_lambda, spec.outcome.clone())?);
    }
    let m0 = out.pop().expect("two models");
    let m1 = out.pop().expect("two models");
    Ok((m1, m0))
}
