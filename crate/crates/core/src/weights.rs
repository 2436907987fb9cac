//! Per-decision, stabilized, and truncated inverse-probability weights.
//!
//! The weight that multiplies a residual in the estimators is
//! `operative = truncated / p̃_arm`, where `p̃_arm` is the numerator
//! probability of the arm actually received. Without truncation this equals
//! `1 / p̂_arm`, the plain inverse probability weight.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::NuisanceFits;
use crate::panel::PanelDataset;

/// Fixed-bound presets used in the truncation sensitivity sweep.
pub const SWEEP_PRESETS: [(f64, f64); 3] = [(0.01, 10.0), (0.05, 20.0), (0.1, 5.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    #[default]
    PerDecision,
    Cumulative,
}

impl WeightScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "per-decision" => Ok(Self::PerDecision),
            "cumulative" => Ok(Self::Cumulative),
            other => Err(Error::Config(format!(
                "unknown weight scheme `{other}`; expected per-decision or cumulative"
            ))),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerDecision => "per-decision",
            Self::Cumulative => "cumulative",
        })
    }
}

/// Serialized as `none`, `L,U`, or `q:lo,hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TruncSpec {
    None,
    Fixed { lower: f64, upper: f64 },
    Quantile { lo: f64, hi: f64 },
}

impl TryFrom<String> for TruncSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<TruncSpec> for String {
    fn from(t: TruncSpec) -> String {
        t.label()
    }
}

impl Default for TruncSpec {
    fn default() -> Self {
        Self::Quantile { lo: 0.01, hi: 0.99 }
    }
}

impl TruncSpec {
    /// Parses `none`, `L,U`, or `q:lo,hi`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Self::None);
        }
        let (quantile, body) = match s.strip_prefix("q:") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("invalid truncation `{s}`; expected L,U or q:lo,hi or none"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let a: f64 = parts[0].parse().map_err(|_| bad())?;
        let b: f64 = parts[1].parse().map_err(|_| bad())?;
        let spec = if quantile {
            Self::Quantile { lo: a, hi: b }
        } else {
            Self::Fixed { lower: a, upper: b }
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::Fixed { lower, upper } => {
                if lower > 0.0 && lower < upper && upper.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "fixed truncation bounds need 0 < L < U, got ({lower}, {upper})"
                    )))
                }
            }
            Self::Quantile { lo, hi } => {
                if (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "quantile truncation needs 0 <= lo < hi <= 1, got ({lo}, {hi})"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::None => "none".into(),
            Self::Fixed { lower, upper } => format!("{lower},{upper}"),
            Self::Quantile { lo, hi } => format!("q:{lo},{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub mean_w: f64,
    pub sd_w: f64,
    /// `f64::INFINITY` when the mean is zero.
    pub cv_w: f64,
    pub max_w: f64,
    pub trunc_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub raw: Vec<f64>,
    pub stabilized: Vec<f64>,
    pub truncated: Vec<f64>,
    /// Residual multiplier used by the estimators.
    pub operative: Vec<f64>,
    pub bounds: (f64, f64),
    pub scheme: WeightScheme,
    pub diagnostics: WeightDiagnostics,
}

fn arm_prob(a: f64, p: f64) -> f64 {
    a * p + (1.0 - a) * (1.0 - p)
}

/// `A/p̂ + (1−A)/(1−p̂)` per available row.
pub fn per_decision_weights(nuisance: &NuisanceFits, panel: &PanelDataset) -> Result<Vec<f64>> {
    nuisance.check_aligned(panel)?;
    Ok(panel
        .treatments()
        .iter()
        .zip(&nuisance.p_hat)
        .map(|(&a, &p)| 1.0 / arm_prob(a, p))
        .collect())
}

/// Single-decision ratios `p̃_arm / p̂_arm`.
pub fn stabilization_ratios(nuisance: &NuisanceFits, panel: &PanelDataset) -> Result<Vec<f64>> {
    nuisance.check_aligned(panel)?;
    Ok(panel
        .treatments()
        .iter()
        .enumerate()
        .map(|(i, &a)| arm_prob(a, nuisance.p_tilde[i]) / arm_prob(a, nuisance.p_hat[i]))
        .collect())
}

pub fn stabilized_weights(
    nuisance: &NuisanceFits,
    panel: &PanelDataset,
    scheme: WeightScheme,
) -> Result<Vec<f64>> {
    let r = stabilization_ratios(nuisance, panel)?;
    Ok(match scheme {
        WeightScheme::PerDecision => r,
        WeightScheme::Cumulative => cumulative_product(&r, &panel.cluster_index()),
    })
}

/// Running product of `r` within each cluster; rows must be grouped by cluster.
pub fn cumulative_product(r: &[f64], cluster: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.len());
    let mut acc = 1.0;
    for (i, &v) in r.iter().enumerate() {
        if i == 0 || cluster[i] != cluster[i - 1] {
            acc = 1.0;
        }
        acc *= v;
        out.push(acc);
    }
    out
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = alpha * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resolves bounds, then clamps. Returns the truncated vector and the applied `(L, U)`.
pub fn truncate(stabilized: &[f64], spec: &TruncSpec) -> Result<(Vec<f64>, (f64, f64))> {
    spec.check()?;
    if stabilized.is_empty() {
        return Err(Error::Data("cannot truncate an empty weight vector".into()));
    }
    let (lower, upper) = match *spec {
        TruncSpec::None => {
            let lo = stabilized.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = stabilized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        TruncSpec::Fixed { lower, upper } => (lower, upper),
        TruncSpec::Quantile { lo, hi } => {
            let mut s = stabilized.to_vec();
            s.sort_by(f64::total_cmp);
            let (l, u) = (quantile(&s, lo), quantile(&s, hi));
            // Equal bounds arise only from a constant stretch of weights and clamp nothing.
            if l > u {
                return Err(Error::Config(format!("resolved bounds ({l}, {u}) have L > U")));
            }
            (l, u)
        }
    };
    Ok((stabilized.iter().map(|w| w.clamp(lower, upper)).collect(), (lower, upper)))
}

/// Fraction of entries outside `[L, U]`.
pub fn trunc_fraction(stabilized: &[f64], bounds: (f64, f64)) -> f64 {
    if stabilized.is_empty() {
        return 0.0;
    }
    let k = stabilized
        .iter()
        .filter(|&&w| w < bounds.0 || w > bounds.1)
        .count();
    k as f64 / stabilized.len() as f64
}

pub fn diagnostics(weights: &[f64], trunc_pct: f64) -> Result<WeightDiagnostics> {
    if weights.is_empty() {
        return Err(Error::Data("weight diagnostics need a nonempty vector".into()));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let sd = if weights.len() > 1 {
        (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let cv = if mean == 0.0 { f64::INFINITY } else { sd / mean };
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(WeightDiagnostics {
        mean_w: mean,
        sd_w: sd,
        cv_w: cv,
        max_w: max,
        trunc_pct,
    })
}

/// Full weight pipeline: raw, stabilized, truncated, operative, diagnostics.
pub fn build_weights(
    panel: &PanelDataset,
    nuisance: &NuisanceFits,
    scheme: WeightScheme,
    trunc: &TruncSpec,
) -> Result<WeightSet> {
    let raw = per_decision_weights(nuisance, panel)?;
    let stabilized = stabilized_weights(nuisance, panel, scheme)?;
    let (truncated, bounds) = truncate(&stabilized, trunc)?;
    let a = panel.treatments();
    let operative = truncated
        .iter()
        .enumerate()
        .map(|(i, &m)| m / arm_prob(a[i], nuisance.p_tilde[i]))
        .collect();
    let diagnostics = diagnostics(&truncated, trunc_fraction(&stabilized, bounds))?;
    Ok(WeightSet {
        raw,
        stabilized,
        truncated,
        operative,
        bounds,
        scheme,
        diagnostics,
    })
}
