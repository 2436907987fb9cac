//! Standard errors and confidence intervals from influence values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Critical {
    #[default]
    Normal,
    T,
}

impl Critical {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" | "z" => Ok(Self::Normal),
            "t" => Ok(Self::T),
            other => Err(Error::Config(format!("unknown critical value `{other}`; expected normal or t"))),
        }
    }
}

/// Cluster-count inflation surrogates for HC-type small-sample adjustments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterAdjustment {
    #[default]
    None,
    Hc2,
    Hc3,
}

impl ClusterAdjustment {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "hc2" => Ok(Self::Hc2),
            "hc3" => Ok(Self::Hc3),
            other => Err(Error::Config(format!("unknown cluster adjustment `{other}`; expected none, hc2, hc3"))),
        }
    }

    pub fn factor(&self, g: usize, n: usize) -> f64 {
        let gg = g as f64 / (g as f64 - 1.0);
        match self {
            Self::None => gg,
            Self::Hc2 => gg * n as f64 / (n as f64 - 1.0),
            Self::Hc3 => gg * gg,
        }
    }
}

/// Which standard error the primary interval uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeBasis {
    #[default]
    Naive,
    Corrected,
    Cluster,
}

impl SeBasis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "naive" => Ok(Self::Naive),
            "corrected" => Ok(Self::Corrected),
            "cluster" => Ok(Self::Cluster),
            other => Err(Error::Config(format!(
                "unknown standard-error basis `{other}`; expected naive, corrected, cluster"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub level: f64,
    pub critical: Critical,
    pub adjustment: ClusterAdjustment,
    pub se_basis: SeBasis,
    pub p_dim: usize,
    /// Degrees of freedom for t intervals; defaults to clusters − 1.
    pub df: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            critical: Critical::Normal,
            adjustment: ClusterAdjustment::None,
            se_basis: SeBasis::Naive,
            p_dim: 1,
            df: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub se_naive: f64,
    pub se_corrected: f64,
    pub se_cluster: f64,
    /// Primary interval from `se_basis` and `critical`.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
    pub critical: Critical,
    pub df: f64,
    pub p_dim: usize,
    pub se_basis: SeBasis,
    pub adjustment: ClusterAdjustment,
    /// Cluster-SE interval with the normal quantile.
    pub ci_normal: (f64, f64),
    /// Cluster-SE interval with the t quantile at `df`.
    pub ci_t: (f64, f64),
    /// Set when the naive standard error is exactly zero.
    pub degenerate_se: bool,
}

/// `sqrt(mean(φc²) / N)` over available rows.
pub fn if_variance(report: &EstimateReport) -> Result<f64> {
    let phi = &report.influence;
    if phi.len() < 2 {
        return Err(Error::Data(format!("influence variance needs >= 2 rows, got {}", phi.len())));
    }
    let n = phi.len() as f64;
    let m = phi.iter().sum::<f64>() / n;
    let v = phi.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    Ok((v / n).sqrt())
}

/// Subject-level sandwich: `sqrt(Σ s_g² / N² · c)`.
pub fn cluster_sandwich(report: &EstimateReport, adjustment: ClusterAdjustment) -> Result<f64> {
    let g = report.subject_scores.len();
    if g < 2 {
        return Err(Error::DegenerateCluster { found: g });
    }
    let n = report.n_rows;
    let ss: f64 = report.subject_scores.iter().map(|s| s * s).sum();
    Ok((ss / (n as f64 * n as f64) * adjustment.factor(g, n)).sqrt())
}

/// `se · sqrt(n / (n − p_dim))`.
pub fn small_sample_correct(se: f64, n: usize, p_dim: usize) -> Result<f64> {
    if n <= p_dim {
        return Err(Error::Config(format!(
            "small-sample correction needs n > p_dim, got n={n}, p_dim={p_dim}"
        )));
    }
    Ok(se * (n as f64 / (n - p_dim) as f64).sqrt())
}

pub fn critical_value(level: f64, critical: Critical, df: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must be in (0,1), got {level}")));
    }
    let p = 0.5 + level / 2.0;
    match critical {
        Critical::Normal => Ok(Normal::standard().inverse_cdf(p)),
        Critical::T => {
            if !(df >= 1.0) {
                return Err(Error::Config(format!("t intervals need df >= 1, got {df}")));
            }
            let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(t.inverse_cdf(p))
        }
    }
}

pub fn confidence_interval(tau_hat: f64, se: f64, level: f64, critical: Critical, df: f64) -> Result<(f64, f64)> {
    if !(se >= 0.0) {
        return Err(Error::Config(format!("standard error must be >= 0, got {se}")));
    }
    let q = critical_value(level, critical, df)?;
    Ok((tau_hat - q * se, tau_hat + q * se))
}

pub fn infer(report: &EstimateReport, cfg: &InferenceConfig) -> Result<InferenceResult> {
    let se_naive = if_variance(report)?;
    let se_corrected = small_sample_correct(se_naive, report.n_subjects, cfg.p_dim)?;
    let se_cluster = cluster_sandwich(report, cfg.adjustment)?;
    let df = cfg.df.unwrap_or((report.n_subjects - 1) as f64);
    let se = match cfg.se_basis {
        SeBasis::Naive => se_naive,
        SeBasis::Corrected => se_corrected,
        SeBasis::Cluster => se_cluster,
    };
    let (ci_lo, ci_hi) = confidence_interval(report.tau_hat, se, cfg.level, cfg.critical, df)?;
    Ok(InferenceResult {
        se_naive,
        se_corrected,
        se_cluster,
        ci_lo,
        ci_hi,
        level: cfg.level,
        critical: cfg.critical,
        df,
        p_dim: cfg.p_dim,
        se_basis: cfg.se_basis,
        adjustment: cfg.adjustment,
        ci_normal: confidence_interval(report.tau_hat, se_cluster, cfg.level, Critical::Normal, df)?,
        ci_t: confidence_interval(report.tau_hat, se_cluster, cfg.level, Critical::T, df)?,
        degenerate_se: se_naive == 0.0,
    })
}

/// Runs [`infer`], stores the result on the report, and records a warning for a zero SE.
pub fn attach_inference(report: &mut EstimateReport, cfg: &InferenceConfig) -> Result<()> {
    let inf = infer(report, cfg)?;
    if inf.degenerate_se {
        report
            .warnings
            .push("degenerate variance estimate: standard error is exactly zero".into());
    }
    report.inference = Some(inf);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Method;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn report(influence: Vec<f64>, scores: Vec<f64>) -> EstimateReport {
        EstimateReport {
            method: Method::Ipw,
            tau_hat: 0.0,
            n_rows: influence.len(),
            n_subjects: scores.len(),
            influence,
            subject_scores: scores,
            weight_diag: None,
            bounds: None,
            inference: None,
            warnings: vec![],
            config_echo: serde_json::Value::Null,
        }
    }

    #[test]
    fn if_variance_examples() {
        assert_eq!(if_variance(&report(vec![0.3; 5], vec![0.0; 5])).unwrap(), 0.0);
        let se = if_variance(&report(vec![-1.0, 1.0], vec![-1.0, 1.0])).unwrap();
        assert_relative_eq!(se, 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(if_variance(&report(vec![1.0], vec![1.0])).is_err());
    }

    #[test]
    fn cluster_examples() {
        let r = report(vec![0.0; 6], vec![0.0, 0.0, 0.0]);
        assert_eq!(cluster_sandwich(&r, ClusterAdjustment::None).unwrap(), 0.0);
        let a = cluster_sandwich(&report(vec![0.0; 4], vec![-1.5, 1.5]), ClusterAdjustment::None).unwrap();
        let b = cluster_sandwich(&report(vec![0.0; 4], vec![-3.0, 3.0]), ClusterAdjustment::None).unwrap();
        assert_relative_eq!(b, 2.0 * a, epsilon = 1e-15);
        // N=4, G=2: sqrt(4.5/16 · 2)
        assert_relative_eq!(a, (4.5f64 / 16.0 * 2.0).sqrt(), epsilon = 1e-15);
        assert!(matches!(
            cluster_sandwich(&report(vec![0.0; 2], vec![0.0]), ClusterAdjustment::None),
            Err(Error::DegenerateCluster { found: 1 })
        ));
    }

    #[test]
    fn adjustments_are_ordered() {
        let r = report(vec![0.0; 40], vec![1.0, -2.0, 0.5, 0.5]);
        let none = cluster_sandwich(&r, ClusterAdjustment::None).unwrap();
        let hc2 = cluster_sandwich(&r, ClusterAdjustment::Hc2).unwrap();
        let hc3 = cluster_sandwich(&r, ClusterAdjustment::Hc3).unwrap();
        assert!(none < hc2 && hc2 < hc3);
        assert_relative_eq!(hc3 / none, (4.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn correction_factors() {
        assert_relative_eq!(small_sample_correct(1.0, 100, 1).unwrap(), 1.00504, epsilon = 1e-5);
        assert_eq!(small_sample_correct(0.7, 100, 0).unwrap(), 0.7);
        assert_relative_eq!(small_sample_correct(1.0, 30, 3).unwrap(), 1.05409, epsilon = 1e-5);
        assert_eq!(small_sample_correct(2.0, 30, 3).unwrap(), 2.0 * (30.0f64 / 27.0).sqrt());
        assert!(matches!(small_sample_correct(1.0, 3, 3), Err(Error::Config(_))));
    }

    #[test]
    fn interval_examples() {
        assert_eq!(confidence_interval(0.4, 0.0, 0.95, Critical::Normal, 1.0).unwrap(), (0.4, 0.4));
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.95, Critical::Normal, 1.0).unwrap();
        assert_relative_eq!(hi, 1.95996, epsilon = 1e-5);
        assert_relative_eq!(lo, -1.95996, epsilon = 1e-5);
        let (lo, hi) = confidence_interval(0.3261, 0.1013, 0.95, Critical::T, 8.0).unwrap();
        assert_relative_eq!((hi - lo) / 2.0, 2.306 * 0.1013, epsilon = 1e-4);
        assert!((hi - lo) / 2.0 > 0.1985);
        assert!(confidence_interval(0.0, 1.0, 0.95, Critical::T, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn correction_never_shrinks(se in 0.0f64..10.0, n in 2usize..1000, p in 0usize..5) {
            prop_assume!(n > p);
            let c = small_sample_correct(se, n, p).unwrap();
            prop_assert!(c >= se);
            if p == 0 { prop_assert_eq!(c, se); }
            if p > 0 && se > 0.0 { prop_assert!(c > se); }
        }

        #[test]
        fn cluster_se_is_homogeneous(s in proptest::collection::vec(-5.0f64..5.0, 2..30), k in 0.1f64..10.0) {
            let n = s.len() * 3;
            let a = cluster_sandwich(&report(vec![0.0; n], s.clone()), ClusterAdjustment::Hc3).unwrap();
            let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
            let b = cluster_sandwich(&report(vec![0.0; n], scaled), ClusterAdjustment::Hc3).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-12 * (1.0 + b));
        }
    }
}
