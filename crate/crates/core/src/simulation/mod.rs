//! Synthetic micro-randomized trials and Monte Carlo benchmarking.

mod harness;
mod oracle;

pub use harness::{
    run_grid, run_scenario, run_scenario_traced, MethodSummary, RepRecord, RunOptions, ScenarioKey,
    ScenarioResult,
};
pub use oracle::{reference_tau, ORACLE_DRAWS, ORACLE_SEED};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::logistic::{expit, logit};
use crate::nuisance::NuisanceMode;
use crate::panel::{DecisionRow, PanelDataset, SubjectRecord};
use crate::rng::child_seed;
use crate::variance::InferenceConfig;
use crate::weights::{TruncSpec, WeightScheme};

/// Design randomization probability: a constant or a rule in the first covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PSpec {
    Constant(f64),
    /// `clamp(expit(logit(q) + alpha·H1), floor, ceiling)`.
    HistoryLinked { q: f64, alpha: f64, floor: f64, ceiling: f64 },
}

impl PSpec {
    pub fn prob(&self, h1: f64) -> f64 {
        match *self {
            PSpec::Constant(p) => p,
            PSpec::HistoryLinked { q, alpha, floor, ceiling } => {
                expit(logit(q) + alpha * h1).clamp(floor, ceiling)
            }
        }
    }

    /// The constant probability, or `q` for a history-linked rule.
    pub fn nominal(&self) -> f64 {
        match *self {
            PSpec::Constant(p) => p,
            PSpec::HistoryLinked { q, .. } => q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeForm {
    #[default]
    LinearLogit,
    /// Adds `0.5·H1² − 0.4·H1·H2` to the true logit.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    #[default]
    BothCorrect,
    OutcomeWrong,
    TreatmentWrong,
    BothWrong,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "both-correct" => Ok(Self::BothCorrect),
            "outcome-wrong" => Ok(Self::OutcomeWrong),
            "treatment-wrong" => Ok(Self::TreatmentWrong),
            "both-wrong" => Ok(Self::BothWrong),
            other => Err(Error::Config(format!(
                "unknown regime `{other}`; expected both-correct, outcome-wrong, treatment-wrong, both-wrong"
            ))),
        }
    }

    fn outcome_wrong(&self) -> bool {
        matches!(self, Self::OutcomeWrong | Self::BothWrong)
    }

    fn treatment_wrong(&self) -> bool {
        matches!(self, Self::TreatmentWrong | Self::BothWrong)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BothCorrect => "both-correct",
            Self::OutcomeWrong => "outcome-wrong",
            Self::TreatmentWrong => "treatment-wrong",
            Self::BothWrong => "both-wrong",
        })
    }
}

/// One simulation cell. Every field has a default so config files only list overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub p_spec: PSpec,
    pub beta_true: f64,
    pub gamma: Vec<f64>,
    pub outcome_form: OutcomeForm,
    pub delta: f64,
    pub nuisance_regime: Regime,
    pub trunc_spec: TruncSpec,
    pub reps: usize,
    pub seed: u64,
    /// Analyst nuisance mode: design, design+outcome, fit, crossfit:K.
    pub analyst: String,
    pub scheme: WeightScheme,
    /// Covariates used by the stabilizing numerator.
    pub moderators: Vec<String>,
    pub inference: InferenceConfig,
    /// Per-subject decision counts; overrides `T` when set.
    pub cluster_sizes: Option<Vec<usize>>,
    pub subject_intercept_sd: f64,
    pub subject_effect_sd: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "baseline".into(),
            n: 100,
            t: 30,
            p_spec: PSpec::Constant(0.5),
            beta_true: 0.2,
            gamma: vec![0.3, -0.2, 0.1],
            outcome_form: OutcomeForm::LinearLogit,
            delta: 0.0,
            nuisance_regime: Regime::BothCorrect,
            trunc_spec: TruncSpec::default(),
            reps: 1000,
            seed: 20240501,
            analyst: "design+outcome".into(),
            scheme: WeightScheme::PerDecision,
            moderators: Vec::new(),
            inference: InferenceConfig::default(),
            cluster_sizes: None,
            subject_intercept_sd: 0.0,
            subject_effect_sd: 0.0,
        }
    }
}

impl Scenario {
    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.gamma.len()).map(|j| format!("h{j}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario `{}`: {m}", self.name)));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.t < 1 {
            return bad("T must be >= 1".into());
        }
        if self.reps < 1 {
            return bad("reps must be >= 1".into());
        }
        if self.gamma.is_empty() {
            return bad("gamma needs at least one coefficient".into());
        }
        if self.outcome_form == OutcomeForm::Nonlinear && self.gamma.len() < 2 {
            return bad("the nonlinear outcome form needs at least two covariates".into());
        }
        match self.p_spec {
            PSpec::Constant(p) if !(p > 0.0 && p < 1.0) => {
                return bad(format!("constant p must lie in (0,1), got {p}"));
            }
            PSpec::HistoryLinked { q, floor, ceiling, .. }
                if !(q > 0.0 && q < 1.0 && floor > 0.0 && floor < ceiling && ceiling < 1.0) =>
            {
                return bad("history-linked rule needs 0 < q < 1 and 0 < floor < ceiling < 1".into());
            }
            _ => {}
        }
        if let Some(sizes) = &self.cluster_sizes {
            if sizes.len() != self.n || sizes.contains(&0) {
                return bad(format!(
                    "cluster_sizes must list {} positive decision counts",
                    self.n
                ));
            }
        }
        if !(self.subject_intercept_sd >= 0.0 && self.subject_effect_sd >= 0.0) {
            return bad("random-effect SDs must be >= 0".into());
        }
        self.trunc_spec.check()?;
        let mode = self.analyst_mode(0)?;
        if self.nuisance_regime.treatment_wrong()
            && matches!(mode, NuisanceMode::Design | NuisanceMode::DesignOutcome)
        {
            return bad("treatment-wrong regimes need a fitted treatment model (fit or crossfit:K)".into());
        }
        let names = self.covariate_names();
        if let Some(m) = self.moderators.iter().find(|m| !names.contains(m)) {
            return bad(format!("unknown moderator `{m}`"));
        }
        Ok(())
    }

    pub fn analyst_mode(&self, seed: u64) -> Result<NuisanceMode> {
        NuisanceMode::parse(&self.analyst, seed)
    }

    /// Analysis settings for one replication; a wrong model drops `h1`.
    pub fn analysis_config(&self, methods: &[Method], rep_seed: u64) -> Result<AnalysisConfig> {
        let names = self.covariate_names();
        let without_h1: Vec<String> = names.iter().skip(1).cloned().collect();
        Ok(AnalysisConfig {
            methods: methods.to_vec(),
            nuisance: self.analyst_mode(rep_seed)?,
            scheme: self.scheme,
            trunc: self.trunc_spec,
            inference: self.inference.clone(),
            treatment_columns: Some(if self.nuisance_regime.treatment_wrong() {
                without_h1.clone()
            } else {
                names.clone()
            }),
            outcome_columns: Some(if self.nuisance_regime.outcome_wrong() {
                without_h1
            } else {
                names
            }),
            moderators: Some(self.moderators.clone()),
            ..AnalysisConfig::default()
        })
    }

    pub fn decisions(&self, subject: usize) -> usize {
        self.cluster_sizes.as_ref().map_or(self.t, |s| s[subject])
    }

    /// True logit without the treatment term.
    pub fn baseline_logit(&self, h: &[f64]) -> f64 {
        let mut eta: f64 = self.gamma.iter().zip(h).map(|(g, x)| g * x).sum();
        if self.outcome_form == OutcomeForm::Nonlinear {
            eta += 0.5 * h[0] * h[0] - 0.4 * h[0] * h[1];
        }
        eta
    }

    /// Probability that actually generates treatment: the design value shifted by `delta` on the logit scale.
    pub fn generating_prob(&self, h1: f64) -> f64 {
        let p = self.p_spec.prob(h1);
        if self.delta == 0.0 {
            p
        } else {
            expit(logit(p) + self.delta)
        }
    }
}

/// A generated replication with its sample-level truth.
#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: PanelDataset,
    /// Mean of `Y(1) − Y(0)` over all rows, from the drawn potential outcomes.
    pub tau_rep: f64,
}

/// Draws replication `rep_index` of `scn`; the seed is derived from `(scn.seed, rep_index)`.
pub fn generate_panel(scn: &Scenario, rep_index: u64) -> Result<PanelDataset> {
    Ok(generate(scn, rep_index)?.panel)
}

/// As [`generate_panel`], also returning the replication truth.
///
/// Uniforms for treatment and outcome are drawn per row, so scenarios that
/// differ only in `delta` share covariates and thresholds.
pub fn generate(scn: &Scenario, rep_index: u64) -> Result<GeneratedPanel> {
    scn.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(scn.seed, rep_index));
    let k = scn.gamma.len();
    let mut panel = PanelDataset::new(scn.covariate_names());
    panel.moderator_names = scn.moderators.clone();
    let mut po_sum = 0.0;
    let mut rows_total = 0usize;
    for i in 0..scn.n {
        let z_u: f64 = rng.sample(StandardNormal);
        let z_b: f64 = rng.sample(StandardNormal);
        let u = scn.subject_intercept_sd * z_u;
        let b = scn.subject_effect_sd * z_b;
        let t_i = scn.decisions(i);
        let mut rows = Vec::with_capacity(t_i);
        for t in 1..=t_i {
            let h: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let ua: f64 = rng.random();
            let vy: f64 = rng.random();
            let p_known = scn.p_spec.prob(h[0]);
            let a = u8::from(ua < scn.generating_prob(h[0]));
            let eta = scn.baseline_logit(&h) + u;
            let y1 = u8::from(vy < expit(eta + scn.beta_true + b));
            let y0 = u8::from(vy < expit(eta));
            po_sum += f64::from(y1) - f64::from(y0);
            rows_total += 1;
            rows.push(DecisionRow {
                t: t as u32,
                a,
                y: if a == 1 { y1 } else { y0 },
                available: 1,
                covariates: h,
                p_known: Some(p_known),
            });
        }
        panel.subjects.push(SubjectRecord {
            subject_id: format!("sim{:04}", i + 1),
            rows,
        });
    }
    let tau_rep = po_sum / rows_total as f64;
    panel.meta.insert("scenario".into(), scn.name.clone());
    panel.meta.insert("rep_index".into(), rep_index.to_string());
    panel.meta.insert("tau_rep".into(), format!("{tau_rep:?}"));
    Ok(GeneratedPanel { panel, tau_rep })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_model_is_symmetric() {
        let scn = Scenario {
            beta_true: 0.0,
            gamma: vec![0.0, 0.0, 0.0],
            reps: 1,
            ..Scenario::default()
        };
        let g = generate(&scn, 0).unwrap();
        let rows: Vec<&DecisionRow> = g.panel.available_rows().map(|(_, r)| r).collect();
        assert_eq!(rows.len(), 3000);
        for arm in [0, 1] {
            let ys: Vec<f64> = rows.iter().filter(|r| r.a == arm).map(|r| f64::from(r.y)).collect();
            let rate = ys.iter().sum::<f64>() / ys.len() as f64;
            assert!((rate - 0.5).abs() < 0.04, "arm {arm}: {rate}");
        }
        assert_eq!(g.tau_rep, 0.0);
        assert!(g.panel.validate().is_empty());
    }

    #[test]
    fn zero_delta_keeps_design_probability() {
        let scn = Scenario {
            p_spec: PSpec::HistoryLinked { q: 0.3, alpha: 0.8, floor: 0.05, ceiling: 0.95 },
            ..Scenario::default()
        };
        for h in [-2.0, -0.3, 0.0, 1.7] {
            assert_eq!(scn.generating_prob(h), scn.p_spec.prob(h));
        }
        let shifted = Scenario { delta: 0.5, ..scn.clone() };
        assert!(shifted.generating_prob(0.0) > scn.generating_prob(0.0));
    }

    #[test]
    fn delta_shares_random_numbers() {
        let a = Scenario { n: 5, t: 10, ..Scenario::default() };
        let b = Scenario { delta: 0.5, ..a.clone() };
        let (pa, pb) = (generate(&a, 3).unwrap().panel, generate(&b, 3).unwrap().panel);
        let ra: Vec<_> = pa.available_rows().map(|(_, r)| r.clone()).collect();
        let rb: Vec<_> = pb.available_rows().map(|(_, r)| r.clone()).collect();
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.covariates, y.covariates);
            assert_eq!(x.p_known, y.p_known);
            assert!(y.a >= x.a, "a positive shift can only add treatments");
        }
    }

    #[test]
    fn ragged_clusters() {
        let scn = Scenario {
            n: 3,
            cluster_sizes: Some(vec![2, 5, 1]),
            ..Scenario::default()
        };
        let p = generate_panel(&scn, 0).unwrap();
        let sizes: Vec<usize> = p.subjects.iter().map(|s| s.rows.len()).collect();
        assert_eq!(sizes, vec![2, 5, 1]);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(Scenario { n: 1, ..Scenario::default() }.validate().is_err());
        assert!(Scenario { p_spec: PSpec::Constant(1.0), ..Scenario::default() }.validate().is_err());
        let tw = Scenario { nuisance_regime: Regime::TreatmentWrong, ..Scenario::default() };
        assert!(tw.validate().is_err());
        assert!(Scenario { analyst: "fit".into(), ..tw }.validate().is_ok());
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = Scenario {
            p_spec: PSpec::HistoryLinked { q: 0.1, alpha: 1.5, floor: 0.012, ceiling: 0.95 },
            trunc_spec: TruncSpec::Fixed { lower: 0.1, upper: 5.0 },
            ..Scenario::default()
        };
        let text = toml::to_string(&s).unwrap();
        assert_eq!(toml::from_str::<Scenario>(&text).unwrap(), s);
        let c: Scenario = toml::from_str("n = 30\np_spec = 0.1\n").unwrap();
        assert_eq!((c.n, c.p_spec, c.t), (30, PSpec::Constant(0.1), 30));
    }
}
