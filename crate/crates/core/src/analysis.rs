//! End-to-end analysis of one panel: nuisance fits, weights, estimates, inference.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{self, EstimateReport, Method};
use crate::logistic::DEFAULT_RIDGE;
use crate::nuisance::{self, NuisanceFits, NuisanceMode, NuisanceSpec};
use crate::panel::{ColumnSpec, PanelDataset};
use crate::variance::{attach_inference, InferenceConfig};
use crate::weights::{build_weights, TruncSpec, WeightScheme, WeightSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub methods: Vec<Method>,
    pub nuisance: NuisanceMode,
    pub scheme: WeightScheme,
    pub trunc: TruncSpec,
    pub inference: InferenceConfig,
    /// Treatment-model columns; all covariates when unset.
    pub treatment_columns: Option<Vec<String>>,
    /// Outcome-model columns; all covariates when unset.
    pub outcome_columns: Option<Vec<String>>,
    /// Numerator columns; the panel's moderators when unset.
    pub moderators: Option<Vec<String>>,
    pub ridge_lambda: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            methods: Method::STANDARD.to_vec(),
            nuisance: NuisanceMode::Fit,
            scheme: WeightScheme::PerDecision,
            trunc: TruncSpec::default(),
            inference: InferenceConfig::default(),
            treatment_columns: None,
            outcome_columns: None,
            moderators: None,
            ridge_lambda: DEFAULT_RIDGE,
        }
    }
}

impl AnalysisConfig {
    pub fn nuisance_spec(&self, panel: &PanelDataset) -> NuisanceSpec {
        let base = NuisanceSpec::for_panel(panel);
        NuisanceSpec {
            treatment: self
                .treatment_columns
                .clone()
                .map_or(base.treatment, |c| ColumnSpec::new(c, true)),
            numerator: self
                .moderators
                .clone()
                .map_or(base.numerator, |c| ColumnSpec::new(c, true)),
            outcome: self
                .outcome_columns
                .clone()
                .map_or(base.outcome, |c| ColumnSpec::new(c, true)),
            ridge_lambda: self.ridge_lambda,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub nuisance: NuisanceFits,
    pub weights: WeightSet,
    pub reports: Vec<EstimateReport>,
}

/// Validates the panel, then fits, weights, estimates, and attaches inference for every method.
pub fn analyze(panel: &PanelDataset, cfg: &AnalysisConfig) -> Result<AnalysisOutput> {
    panel.ensure_valid()?;
    let spec = cfg.nuisance_spec(panel);
    let fits = nuisance::estimate_nuisance(panel, &spec, cfg.nuisance)?;
    let weights = build_weights(panel, &fits, cfg.scheme, &cfg.trunc)?;
    let mut reports = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let mut rep = estimators::estimate(m, panel, &fits, &weights)?;
        attach_inference(&mut rep, &cfg.inference)?;
        rep.warnings.extend(fits.warnings.iter().cloned());
        reports.push(rep);
    }
    Ok(AnalysisOutput {
        nuisance: fits,
        weights,
        reports,
    })
}
