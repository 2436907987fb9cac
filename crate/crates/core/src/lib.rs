//! Excursion-effect estimation for binary proximal outcomes in micro-randomized trials.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod ingestion;
pub mod logistic;
pub mod nuisance;
pub mod panel;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod variance;
pub mod weights;

pub use error::{Error, Result};
pub use estimators::{EstimateReport, Method};
pub use nuisance::{NuisanceFits, NuisanceMode, NuisanceSpec};
pub use panel::{ColumnSpec, DecisionRow, PanelDataset, SubjectRecord};
pub use variance::{InferenceConfig, InferenceResult};
pub use weights::{TruncSpec, WeightDiagnostics, WeightScheme, WeightSet};
