//! Point estimators of the marginal excursion effect with per-row influence values.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::solve_spd;
use crate::nuisance::NuisanceFits;
use crate::panel::PanelDataset;
use crate::variance::InferenceResult;
use crate::weights::{WeightDiagnostics, WeightSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "EMEE")]
    Emee,
    #[serde(rename = "DR-EMEE")]
    DrEmee,
    #[serde(rename = "DR-EMEE2")]
    DrEmee2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ipw, Method::Emee, Method::DrEmee, Method::DrEmee2];
    /// The set run by `all`.
    pub const STANDARD: [Method; 3] = [Method::Ipw, Method::Emee, Method::DrEmee];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ipw => "IPW",
            Method::Emee => "EMEE",
            Method::DrEmee => "DR-EMEE",
            Method::DrEmee2 => "DR-EMEE2",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipw" => Ok(Method::Ipw),
            "emee" => Ok(Method::Emee),
            "dr-emee" | "dr_emee" | "dremee" => Ok(Method::DrEmee),
            "dr-emee2" | "dr_emee2" | "dremee2" => Ok(Method::DrEmee2),
            other => Err(Error::Config(format!(
                "unknown method `{other}`; valid methods: IPW, EMEE, DR-EMEE, DR-EMEE2, all"
            ))),
        }
    }

    /// Comma-separated list; `all` expands to IPW, EMEE, DR-EMEE.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(Method::STANDARD);
            } else {
                out.push(Method::parse(part)?);
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub tau_hat: f64,
    pub influence: Vec<f64>,
    /// Summed influence per subject with at least one available row.
    pub subject_scores: Vec<f64>,
    pub n_subjects: usize,
    pub n_rows: usize,
    pub weight_diag: Option<WeightDiagnostics>,
    pub bounds: Option<(f64, f64)>,
    #[serde(default)]
    pub inference: Option<InferenceResult>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub config_echo: serde_json::Value,
}

struct Inputs {
    a: Vec<f64>,
    y: Vec<f64>,
    cluster: Vec<usize>,
}

fn inputs(panel: &PanelDataset, nuisance: &NuisanceFits, weights: Option<&WeightSet>) -> Result<Inputs> {
    nuisance.check_aligned(panel)?;
    let a = panel.treatments();
    if let Some(w) = weights {
        if w.operative.len() != a.len() {
            return Err(Error::Config(format!(
                "weight vector has {} rows, panel has {} available rows",
                w.operative.len(),
                a.len()
            )));
        }
    }
    for arm in [0u8, 1] {
        if !a.iter().any(|&v| v == f64::from(arm)) {
            return Err(Error::DegenerateArm { arm });
        }
    }
    Ok(Inputs {
        a,
        y: panel.outcomes(),
        cluster: panel.cluster_index(),
    })
}

/// Builds a report from per-row values whose mean is the estimate.
fn report_from_values(method: Method, values: &[f64], cluster: &[usize], weights: Option<&WeightSet>) -> EstimateReport {
    let n = values.len() as f64;
    let tau = values.iter().sum::<f64>() / n;
    report_from_influence(method, tau, values.iter().map(|v| v - tau).collect(), cluster, weights)
}

fn report_from_influence(
    method: Method,
    tau: f64,
    mut influence: Vec<f64>,
    cluster: &[usize],
    weights: Option<&WeightSet>,
) -> EstimateReport {
    let n = influence.len() as f64;
    let m = influence.iter().sum::<f64>() / n;
    for v in &mut influence {
        *v -= m;
    }
    let subject_scores = subject_sums(&influence, cluster);
    EstimateReport {
        method,
        tau_hat: tau,
        n_subjects: subject_scores.len(),
        n_rows: influence.len(),
        influence,
        subject_scores,
        weight_diag: weights.map(|w| w.diagnostics),
        bounds: weights.map(|w| w.bounds),
        inference: None,
        warnings: Vec::new(),
        config_echo: serde_json::Value::Null,
    }
}

/// Sums `values` over consecutive runs of equal cluster index.
pub fn subject_sums(values: &[f64], cluster: &[usize]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if i == 0 || cluster[i] != cluster[i - 1] {
            out.push(0.0);
        }
        *out.last_mut().expect("pushed") += v;
    }
    out
}

/// Horvitz–Thompson difference of weighted arm means.
pub fn estimate_ipw(panel: &PanelDataset, nuisance: &NuisanceFits, weights: &WeightSet) -> Result<EstimateReport> {
    let d = inputs(panel, nuisance, Some(weights))?;
    let v: Vec<f64> = (0..d.a.len())
        .map(|i| {
            let w = weights.operative[i];
            d.a[i] * w * d.y[i] - (1.0 - d.a[i]) * w * d.y[i]
        })
        .collect();
    Ok(report_from_values(Method::Ipw, &v, &d.cluster, Some(weights)))
}

/// Regression (g-computation) estimator; its influence includes the
/// first-order effect of estimating the arm-specific outcome models.
pub fn estimate_emee(panel: &PanelDataset, nuisance: &NuisanceFits) -> Result<EstimateReport> {
    if !nuisance.outcome_fitted {
        return Err(Error::Config(
            "EMEE needs fitted outcome models; the design-only nuisance carries a placeholder".into(),
        ));
    }
    let d = inputs(panel, nuisance, None)?;
    let (m1, m0) = (&nuisance.m1_hat, &nuisance.m0_hat);
    let diff: Vec<f64> = m1.iter().zip(m0).map(|(a, b)| a - b).collect();
    let n = diff.len() as f64;
    let tau = diff.iter().sum::<f64>() / n;

    let x = panel.design_for(&nuisance.spec.outcome)?;
    let c1 = correction_direction(&x, m1, &d.a, 1.0)?;
    let c0 = correction_direction(&x, m0, &d.a, 0.0)?;
    let infl: Vec<f64> = (0..d.a.len())
        .map(|i| {
            let xi = x.row(i);
            let l1 = xi.dot(&c1.transpose());
            let l0 = xi.dot(&c0.transpose());
            (diff[i] - tau) + l1 * d.a[i] * (d.y[i] - m1[i]) - l0 * (1.0 - d.a[i]) * (d.y[i] - m0[i])
        })
        .collect();
    let mut rep = report_from_influence(Method::Emee, tau, infl, &d.cluster, None);
    if nuisance.source == crate::nuisance::NuisanceSource::CrossFitted {
        rep.warnings
            .push("EMEE influence uses the in-sample outcome-model correction with cross-fitted predictions".into());
    }
    Ok(rep)
}

/// `(Σ_{A=arm} v x xᵀ)⁻¹ Σ_all v x` with `v = m(1 − m)`.
fn correction_direction(x: &DMatrix<f64>, m: &[f64], a: &[f64], arm: f64) -> Result<DVector<f64>> {
    let k = x.ncols();
    let mut info = DMatrix::<f64>::zeros(k, k);
    let mut grad = DVector::<f64>::zeros(k);
    for i in 0..x.nrows() {
        let v = m[i] * (1.0 - m[i]);
        let xi = x.row(i);
        for r in 0..k {
            grad[r] += v * xi[r];
            if a[i] == arm {
                for c in 0..k {
                    info[(r, c)] += v * xi[r] * xi[c];
                }
            }
        }
    }
    let scale = (0..k).map(|j| info[(j, j)]).fold(0.0, f64::max).max(1.0);
    for j in 0..k {
        info[(j, j)] += 1e-12 * scale;
    }
    solve_spd(info, grad)
}

fn dr_values(d: &Inputs, nuisance: &NuisanceFits, weights: &WeightSet) -> Vec<f64> {
    (0..d.a.len())
        .map(|i| {
            let (m1, m0) = (nuisance.m1_hat[i], nuisance.m0_hat[i]);
            let w = weights.operative[i];
            (m1 - m0) + d.a[i] * w * (d.y[i] - m1) - (1.0 - d.a[i]) * w * (d.y[i] - m0)
        })
        .collect()
}

/// Augmented estimator with stabilized, truncated residual weights.
pub fn estimate_dr_emee(panel: &PanelDataset, nuisance: &NuisanceFits, weights: &WeightSet) -> Result<EstimateReport> {
    let d = inputs(panel, nuisance, Some(weights))?;
    let v = dr_values(&d, nuisance, weights);
    Ok(report_from_values(Method::DrEmee, &v, &d.cluster, Some(weights)))
}

/// Least-squares projection of `phi` onto the columns of `z` (no added intercept).
/// Returns fitted values and whether the pseudo-inverse fallback was used.
pub fn project(phi: &[f64], z: &DMatrix<f64>) -> Result<(Vec<f64>, bool)> {
    let gram = z.transpose() * z;
    let rhs = z.transpose() * DVector::from_column_slice(phi);
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let singular = max <= 0.0 || min <= max * 1e-12;
    let coef = if singular {
        gram.pseudo_inverse(max.max(f64::MIN_POSITIVE) * 1e-12)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?
            * rhs
    } else {
        solve_spd(gram, rhs)?
    };
    Ok(((z * coef).iter().copied().collect(), singular))
}

/// DR-EMEE with its influence residualized on the treatment-model score basis.
pub fn estimate_dr_emee2(panel: &PanelDataset, nuisance: &NuisanceFits, weights: &WeightSet) -> Result<EstimateReport> {
    let d = inputs(panel, nuisance, Some(weights))?;
    let v = dr_values(&d, nuisance, weights);
    let n = v.len() as f64;
    let tau_dr = v.iter().sum::<f64>() / n;
    let phi: Vec<f64> = v.iter().map(|x| x - tau_dr).collect();

    let g = panel.design_for(&nuisance.spec.treatment)?;
    let z = score_basis(&g, &d.a, &nuisance.p_hat);
    let (fitted, singular) = project(&phi, &z)?;
    let mean_fit = fitted.iter().sum::<f64>() / n;
    let resid: Vec<f64> = phi.iter().zip(&fitted).map(|(p, f)| p - f).collect();
    let mut rep = report_from_influence(Method::DrEmee2, tau_dr - mean_fit, resid, &d.cluster, Some(weights));
    if singular {
        rep.warnings
            .push("singular score Gram matrix; projection used the pseudo-inverse".into());
    }
    Ok(rep)
}

/// Columns `(A − p̂)·g_k(H)`.
pub fn score_basis(g: &DMatrix<f64>, a: &[f64], p_hat: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, k| (a[i] - p_hat[i]) * g[(i, k)])
}

pub fn estimate(
    method: Method,
    panel: &PanelDataset,
    nuisance: &NuisanceFits,
    weights: &WeightSet,
) -> Result<EstimateReport> {
    match method {
        Method::Ipw => estimate_ipw(panel, nuisance, weights),
        Method::Emee => estimate_emee(panel, nuisance),
        Method::DrEmee => estimate_dr_emee(panel, nuisance, weights),
        Method::DrEmee2 => estimate_dr_emee2(panel, nuisance, weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{self, NuisanceSpec};
    use crate::panel::{DecisionRow, SubjectRecord};
    use crate::weights::{build_weights, TruncSpec, WeightScheme};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(n: usize, t: usize, seed: u64, p: f64, beta: f64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut panel = PanelDataset::new(vec!["h1".into(), "h2".into()]);
        for i in 0..n {
            let rows = (1..=t)
                .map(|tt| {
                    let h1: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    let h2: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    let a = u8::from(rng.random::<f64>() < p);
                    let eta = 0.4 * h1 - 0.3 * h2 + beta * f64::from(a);
                    let y = u8::from(rng.random::<f64>() < crate::logistic::expit(eta));
                    DecisionRow { t: tt as u32, a, y, available: 1, covariates: vec![h1, h2], p_known: Some(p) }
                })
                .collect();
            panel.subjects.push(SubjectRecord { subject_id: format!("s{i}"), rows });
        }
        panel
    }

    fn setup(panel: &PanelDataset) -> (NuisanceFits, WeightSet) {
        let spec = NuisanceSpec::for_panel(panel);
        let f = nuisance::from_design_with_outcome(panel, &spec).unwrap();
        let w = build_weights(panel, &f, WeightScheme::PerDecision, &TruncSpec::None).unwrap();
        (f, w)
    }

    #[test]
    fn ipw_outcome_equals_treatment() {
        let mut p = random_panel(5, 10, 1, 0.5, 0.0);
        for s in &mut p.subjects {
            for r in &mut s.rows {
                r.y = r.a;
            }
        }
        let (f, _) = setup(&p);
        // Exactly balanced weights: operative = 1 / empirical arm share.
        let a = p.treatments();
        let share = a.iter().sum::<f64>() / a.len() as f64;
        let mut w = build_weights(&p, &f, WeightScheme::PerDecision, &TruncSpec::None).unwrap();
        w.operative = a.iter().map(|&x| if x == 1.0 { 1.0 / share } else { 1.0 / (1.0 - share) }).collect();
        let r = estimate_ipw(&p, &f, &w).unwrap();
        assert_relative_eq!(r.tau_hat, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ipw_null_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_panel(100, 30, 2, 0.5, 0.0);
        for s in &mut p.subjects {
            for r in &mut s.rows {
                r.y = u8::from(rng.random::<f64>() < 0.4);
            }
        }
        let (f, w) = setup(&p);
        assert!(estimate_ipw(&p, &f, &w).unwrap().tau_hat.abs() < 0.03);
    }

    #[test]
    fn emee_identical_regressions_zero() {
        let p = random_panel(4, 5, 1, 0.5, 0.2);
        let (mut f, _) = setup(&p);
        f.m0_hat = f.m1_hat.clone();
        assert_eq!(estimate_emee(&p, &f).unwrap().tau_hat, 0.0);
    }

    #[test]
    fn emee_saturated_equals_stratified_difference() {
        // Two binary covariate levels → four cells; saturated model = cell indicators.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = PanelDataset::new(vec!["lvl".into(), "one".into()]);
        for i in 0..40 {
            let lvl = f64::from(u8::from(i % 3 == 0));
            let rows = (1..=10)
                .map(|t| {
                    let a = u8::from(rng.random::<f64>() < 0.5);
                    let pr = 0.3 + 0.2 * lvl + 0.15 * f64::from(a);
                    DecisionRow {
                        t,
                        a,
                        y: u8::from(rng.random::<f64>() < pr),
                        available: 1,
                        covariates: vec![lvl, 1.0 - lvl],
                        p_known: Some(0.5),
                    }
                })
                .collect();
            p.subjects.push(SubjectRecord { subject_id: format!("s{i}"), rows });
        }
        let spec = NuisanceSpec {
            outcome: crate::panel::ColumnSpec::new(vec!["lvl".into(), "one".into()], false),
            ridge_lambda: 1e-10,
            ..NuisanceSpec::for_panel(&p)
        };
        let f = nuisance::from_design_with_outcome(&p, &spec).unwrap();
        let r = estimate_emee(&p, &f).unwrap();

        let rows: Vec<&DecisionRow> = p.available_rows().map(|(_, r)| r).collect();
        let mut expected = 0.0;
        for lvl in [0.0, 1.0] {
            let cell = |arm: u8| {
                let ys: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.covariates[0] == lvl && r.a == arm)
                    .map(|r| f64::from(r.y))
                    .collect();
                ys.iter().sum::<f64>() / ys.len() as f64
            };
            let share = rows.iter().filter(|r| r.covariates[0] == lvl).count() as f64 / rows.len() as f64;
            expected += share * (cell(1) - cell(0));
        }
        assert_relative_eq!(r.tau_hat, expected, epsilon = 1e-7);
    }

    #[test]
    fn emee_rejects_placeholder() {
        let p = random_panel(3, 4, 1, 0.5, 0.0);
        let f = nuisance::from_design(&p, &NuisanceSpec::for_panel(&p)).unwrap();
        assert!(matches!(estimate_emee(&p, &f), Err(Error::Config(_))));
    }

    #[test]
    fn dr_residual_free_outcome() {
        let p = random_panel(6, 6, 4, 0.5, 0.0);
        let (mut f, mut w) = setup(&p);
        let y = p.outcomes();
        let a = p.treatments();
        // m̂ reproduces Y on the realized arm, arbitrary on the other.
        f.m1_hat = (0..y.len()).map(|i| if a[i] == 1.0 { y[i] } else { 0.3 }).collect();
        f.m0_hat = (0..y.len()).map(|i| if a[i] == 0.0 { y[i] } else { 0.6 }).collect();
        for (i, o) in w.operative.iter_mut().enumerate() {
            *o = 1.0 + i as f64;
        }
        let r = estimate_dr_emee(&p, &f, &w).unwrap();
        let expect = f.m1_hat.iter().zip(&f.m0_hat).map(|(a, b)| a - b).sum::<f64>() / y.len() as f64;
        assert_relative_eq!(r.tau_hat, expect, epsilon = 1e-12);
    }

    #[test]
    fn influence_centered_and_scores_sum() {
        let p = random_panel(12, 9, 5, 0.3, 0.4);
        let (f, w) = setup(&p);
        for m in Method::ALL {
            let r = estimate(m, &p, &f, &w).unwrap();
            let mean = r.influence.iter().sum::<f64>() / r.n_rows as f64;
            assert!(mean.abs() < 1e-10, "{m}: {mean}");
            assert_eq!(r.subject_scores.len(), 12);
            let cl = p.cluster_index();
            for g in 0..12 {
                let s: f64 = (0..cl.len()).filter(|&i| cl[i] == g).map(|i| r.influence[i]).sum();
                assert_eq!(s, r.subject_scores[g]);
            }
        }
    }

    #[test]
    fn degenerate_arm_named() {
        let mut p = random_panel(3, 3, 1, 0.5, 0.0);
        for s in &mut p.subjects {
            for r in &mut s.rows {
                r.a = 0;
            }
        }
        let f = nuisance::from_design(&p, &NuisanceSpec::for_panel(&p)).unwrap();
        let w = build_weights(&p, &f, WeightScheme::PerDecision, &TruncSpec::None).unwrap();
        assert!(matches!(estimate_ipw(&p, &f, &w), Err(Error::DegenerateArm { arm: 1 })));
    }

    #[test]
    fn projection_planned_component_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 2000;
        let g = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
        let a: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
        let p = vec![0.5; n];
        let z = score_basis(&g, &a, &p);
        let phi0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let phi: Vec<f64> = (0..n).map(|i| phi0[i] + 0.5 * z[(i, 0)] + 0.8 * z[(i, 1)]).collect();
        let (fit, singular) = project(&phi, &z).unwrap();
        assert!(!singular);
        let resid: Vec<f64> = phi.iter().zip(&fit).map(|(a, b)| a - b).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(&resid) <= 0.8 * var(&phi));
    }

    #[test]
    fn projection_orthogonal_is_identity() {
        // Hand case: score column (A − p) = ±0.5 and φ orthogonal to it.
        let a = [1.0, 0.0, 1.0, 0.0];
        let g = DMatrix::from_element(4, 1, 1.0);
        let z = score_basis(&g, &a, &[0.5; 4]);
        let phi = [1.0, 1.0, -1.0, -1.0];
        let (fit, _) = project(&phi, &z).unwrap();
        assert!(fit.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn singular_gram_falls_back() {
        let p = random_panel(10, 10, 8, 0.5, 0.2);
        let mut q = p.clone();
        q.covariate_names.push("dup".into());
        for s in &mut q.subjects {
            for r in &mut s.rows {
                let v = r.covariates[0];
                r.covariates.push(v);
            }
        }
        let (f, w) = setup(&q);
        let r = estimate_dr_emee2(&q, &f, &w).unwrap();
        assert!(r.warnings.iter().any(|m| m.contains("pseudo-inverse")));
        assert!(r.tau_hat.is_finite());
    }

    #[test]
    fn permuting_subjects_keeps_estimates() {
        let p = random_panel(15, 8, 13, 0.4, 0.3);
        let mut q = p.clone();
        q.subjects.reverse();
        let spec = NuisanceSpec::for_panel(&p);
        let est = |panel: &PanelDataset| {
            let f = nuisance::fit(panel, &spec).unwrap();
            let w = build_weights(panel, &f, WeightScheme::PerDecision, &TruncSpec::default()).unwrap();
            Method::ALL.map(|m| estimate(m, panel, &f, &w).unwrap().tau_hat)
        };
        let (x, y) = (est(&p), est(&q));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn method_lists() {
        assert_eq!(Method::parse_list("all").unwrap(), Method::STANDARD.to_vec());
        assert_eq!(Method::parse_list("dr-emee,IPW").unwrap(), vec![Method::DrEmee, Method::Ipw]);
        let e = Method::parse_list("ols").unwrap_err().to_string();
        assert!(e.contains("IPW") && e.contains("DR-EMEE"));
    }
}
