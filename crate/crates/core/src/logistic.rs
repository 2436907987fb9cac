//! Ridge-penalized logistic regression fitted by Newton–Raphson (IRLS).
//!
//! The objective is the weighted Bernoulli log-likelihood minus
//! `λ/2 · ‖β‖²`; every coefficient, intercept included, is penalized so the
//! optimum stays finite under separation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::ColumnSpec;

/// Predictions are clipped to `[EPS_CLIP, 1 - EPS_CLIP]`.
pub const EPS_CLIP: f64 = 1e-6;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const MAX_RIDGE: f64 = 1e-2;
/// Any coefficient above this magnitude is treated as separation.
pub const SEPARATION_COEF: f64 = 30.0;

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first when `column_spec.intercept` is set.
    pub coefficients: Vec<f64>,
    pub column_spec: ColumnSpec,
    pub ridge_lambda: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    x * beta
}

/// Weighted ridge-penalized Bernoulli log-likelihood.
pub fn penalized_loglik(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    beta: &[f64],
) -> f64 {
    let b = DVector::from_column_slice(beta);
    let eta = linear_predictor(x, &b);
    let ll: f64 = eta
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let w = weights.map_or(1.0, |w| w[i]);
            w * (y[i] * e - log1p_exp(e))
        })
        .sum();
    ll - 0.5 * lambda * b.norm_squared()
}

/// Gradient of [`penalized_loglik`] with respect to the coefficients.
pub fn score(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    beta: &[f64],
) -> Vec<f64> {
    let b = DVector::from_column_slice(beta);
    let eta = linear_predictor(x, &b);
    let k = x.ncols();
    let mut g = vec![0.0; k];
    for i in 0..x.nrows() {
        let w = weights.map_or(1.0, |w| w[i]);
        let r = w * (y[i] - expit(eta[i]));
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += x[(i, j)] * r;
        }
    }
    for (gj, bj) in g.iter_mut().zip(beta) {
        *gj -= lambda * bj;
    }
    g
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, lambda: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Config(format!(
            "design has {} rows but outcome has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::Config(format!(
                "weight vector has {} entries, expected {}",
                w.len(),
                y.len()
            )));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Config("logistic outcome must be binary 0/1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("design matrix contains non-finite values".into()));
    }
    Ok(())
}

/// Fits the penalized maximum-likelihood logistic model by IRLS with step-halving.
///
/// `converged` is set iff the largest absolute score component drops below
/// `1e-8` within 100 Newton iterations; otherwise the best iterate is returned.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge_lambda: f64,
    column_spec: ColumnSpec,
) -> Result<LogisticModel> {
    irls(x, y, weights, ridge_lambda, column_spec, None)
}

fn irls(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge_lambda: f64,
    column_spec: ColumnSpec,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LogisticModel> {
    check_inputs(x, y, weights, ridge_lambda)?;
    let k = x.ncols();
    if column_spec.width() != k {
        return Err(Error::Config(format!(
            "column spec describes {} columns, design has {k}",
            column_spec.width()
        )));
    }
    if ridge_lambda == 0.0 {
        check_rank(x, weights)?;
    }

    let n = x.nrows();
    let mut beta = vec![0.0; k];
    let mut ll = penalized_loglik(x, y, weights, ridge_lambda, &beta);
    let mut converged = false;
    let mut iterations = 0;
    if let Some(t) = trace.as_deref_mut() {
        t.push(ll);
    }

    for it in 0..MAX_ITER {
        let g = score(x, y, weights, ridge_lambda, &beta);
        if g.iter().all(|v| v.abs() < SCORE_TOL) {
            converged = true;
            iterations = it;
            break;
        }
        iterations = it + 1;

        // Negative Hessian: X' diag(w p (1-p)) X + λI.
        let b = DVector::from_column_slice(&beta);
        let eta = linear_predictor(x, &b);
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let p = expit(eta[i]);
            let w = weights.map_or(1.0, |w| w[i]) * p * (1.0 - p);
            if w == 0.0 {
                continue;
            }
            for a in 0..k {
                let xa = x[(i, a)] * w;
                for c in a..k {
                    info[(a, c)] += xa * x[(i, c)];
                }
            }
        }
        for a in 0..k {
            info[(a, a)] += ridge_lambda;
            for c in 0..a {
                info[(a, c)] = info[(c, a)];
            }
        }
        let step = solve_spd(info, DVector::from_vec(g))?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let ll_c = penalized_loglik(x, y, weights, ridge_lambda, &cand);
            if ll_c.is_finite() && ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = ll_c.max(ll);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(ll_c);
                }
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision.
            let g = score(x, y, weights, ridge_lambda, &beta);
            converged = g.iter().all(|v| v.abs() < SCORE_TOL);
            break;
        }
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("logistic fit produced non-finite coefficients".into()));
    }
    Ok(LogisticModel {
        coefficients: beta,
        column_spec,
        ridge_lambda,
        converged,
        iterations,
    })
}

/// Fits with the default ridge ladder: `λ` is multiplied by 10 (capped at `1e-2`)
/// while the fit shows separation or fails to converge.
pub fn fit_logistic_auto(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge_lambda: f64,
    column_spec: ColumnSpec,
) -> Result<LogisticModel> {
    let mut lambda = ridge_lambda.max(f64::MIN_POSITIVE);
    loop {
        let model = fit_logistic(x, y, weights, lambda, column_spec.clone())?;
        let separated = model.coefficients.iter().any(|b| b.abs() > SEPARATION_COEF);
        if (!separated && model.converged) || lambda >= MAX_RIDGE {
            return Ok(model);
        }
        lambda = (lambda * 10.0).min(MAX_RIDGE);
    }
}

/// `expit(Xβ)` clipped to `[EPS_CLIP, 1 - EPS_CLIP]`.
pub fn predict_prob(model: &LogisticModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::Config(format!(
            "design has {} columns, model expects {}",
            x.ncols(),
            model.coefficients.len()
        )));
    }
    let b = DVector::from_column_slice(&model.coefficients);
    Ok(linear_predictor(x, &b).iter().map(|&e| clip_prob(expit(e))).collect())
}

fn check_rank(x: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<()> {
    let k = x.ncols();
    let mut g = DMatrix::<f64>::zeros(k, k);
    for i in 0..x.nrows() {
        let w = weights.map_or(1.0, |w| w[i]);
        for a in 0..k {
            for c in 0..k {
                g[(a, c)] += w * x[(i, a)] * x[(i, c)];
            }
        }
    }
    let eig = g.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if k > 0 && (max <= 0.0 || min <= max * 1e-12) {
        return Err(Error::Numerical(
            "design matrix is rank deficient; refit with ridge_lambda > 0".into(),
        ));
    }
    Ok(())
}

/// Solves a symmetric positive-definite system, falling back to a
/// pseudo-inverse when the Cholesky factorization fails.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    let pinv = a
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    Ok(pinv * b)
}
