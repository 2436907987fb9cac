use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, reference_tau, Regime, Scenario};
use crate::analysis::analyze;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::rng::child_seed;
use crate::weights::{quantile, WeightDiagnostics};

/// Largest tolerated fraction of excluded replications.
pub const MAX_EXCLUDED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    /// Worker threads; `None` uses available parallelism.
    pub workers: Option<usize>,
    /// Keep per-replication records.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub n: usize,
    pub p: f64,
    pub trunc: String,
    pub regime: Regime,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_tau_hat: f64,
    pub bias: f64,
    /// Sample SD of the estimates (divisor reps − 1).
    pub sd: f64,
    pub mean_se: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mc_se: f64,
    pub coverage: f64,
    /// `mse(IPW) / mse(method)`; absent when IPW was not run.
    pub re: Option<f64>,
    #[serde(rename = "q2.5")]
    pub q2_5: f64,
    pub median: f64,
    #[serde(rename = "q97.5")]
    pub q97_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepEstimate {
    pub method: Method,
    pub tau_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub seed: u64,
    pub tau_rep: f64,
    /// Reason the replication was excluded, if it was.
    pub excluded: Option<String>,
    pub estimates: Vec<RepEstimate>,
    pub weight_diag: Option<WeightDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub key: ScenarioKey,
    pub tau_ref: f64,
    pub mean_tau_rep: f64,
    pub reps: usize,
    pub excluded: usize,
    pub methods: Vec<MethodSummary>,
    /// Replication means of the weight diagnostics.
    pub weight_diag: WeightDiagnostics,
    pub runtime_sec: f64,
}

impl ScenarioResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

fn one_rep(scn: &Scenario, methods: &[Method], rep: u64) -> Result<RepRecord> {
    let seed = child_seed(scn.seed, rep);
    let g = generate(scn, rep)?;
    let cfg = scn.analysis_config(methods, seed)?;
    match analyze(&g.panel, &cfg) {
        Ok(out) => Ok(RepRecord {
            rep,
            seed,
            tau_rep: g.tau_rep,
            excluded: None,
            estimates: out
                .reports
                .iter()
                .map(|r| {
                    let inf = r.inference.as_ref().expect("inference attached");
                    let se = match cfg.inference.se_basis {
                        crate::variance::SeBasis::Naive => inf.se_naive,
                        crate::variance::SeBasis::Corrected => inf.se_corrected,
                        crate::variance::SeBasis::Cluster => inf.se_cluster,
                    };
                    RepEstimate {
                        method: r.method,
                        tau_hat: r.tau_hat,
                        se,
                        ci_lo: inf.ci_lo,
                        ci_hi: inf.ci_hi,
                    }
                })
                .collect(),
            weight_diag: Some(out.weights.diagnostics),
        }),
        Err(e @ (Error::DegenerateArm { .. } | Error::DegenerateFold { .. })) => Ok(RepRecord {
            rep,
            seed,
            tau_rep: g.tau_rep,
            excluded: Some(e.to_string()),
            estimates: Vec::new(),
            weight_diag: None,
        }),
        Err(e) => Err(e),
    }
}

/// Runs every replication of `scn` and aggregates the per-method metrics.
pub fn run_scenario(scn: &Scenario, methods: &[Method]) -> Result<ScenarioResult> {
    Ok(run_scenario_traced(scn, methods, RunOptions::default())?.0)
}

/// As [`run_scenario`] with explicit worker count; returns replication records when `opts.trace` is set.
pub fn run_scenario_traced(
    scn: &Scenario,
    methods: &[Method],
    opts: RunOptions,
) -> Result<(ScenarioResult, Vec<RepRecord>)> {
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    scn.validate()?;
    let start = Instant::now();
    let tau_ref = reference_tau(scn);
    let run = || -> Vec<Result<RepRecord>> {
        (0..scn.reps as u64)
            .into_par_iter()
            .map(|r| one_rep(scn, methods, r))
            .collect()
    };
    let outcomes = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    let records = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut result = aggregate(scn, methods, tau_ref, &records)?;
    result.runtime_sec = start.elapsed().as_secs_f64();
    let trace = if opts.trace { records } else { Vec::new() };
    Ok((result, trace))
}

fn aggregate(scn: &Scenario, methods: &[Method], tau_ref: f64, records: &[RepRecord]) -> Result<ScenarioResult> {
    let kept: Vec<&RepRecord> = records.iter().filter(|r| r.excluded.is_none()).collect();
    let excluded = records.len() - kept.len();
    if excluded as f64 > MAX_EXCLUDED * records.len() as f64 || kept.is_empty() {
        let first = records.iter().find_map(|r| r.excluded.clone()).unwrap_or_default();
        return Err(Error::Data(format!(
            "scenario `{}` failed: {excluded} of {} replications excluded (first: {first})",
            scn.name,
            records.len()
        )));
    }
    let k = kept.len() as f64;

    let mut summaries = Vec::with_capacity(methods.len());
    for (j, &m) in methods.iter().enumerate() {
        let est: Vec<&RepEstimate> = kept.iter().map(|r| &r.estimates[j]).collect();
        let taus: Vec<f64> = est.iter().map(|e| e.tau_hat).collect();
        let mean = taus.iter().sum::<f64>() / k;
        let bias = mean - tau_ref;
        let sd = if kept.len() > 1 {
            (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let mse = bias * bias + sd * sd * (k - 1.0) / k;
        let mut sorted = taus.clone();
        sorted.sort_by(f64::total_cmp);
        summaries.push(MethodSummary {
            method: m,
            mean_tau_hat: mean,
            bias,
            sd,
            mean_se: est.iter().map(|e| e.se).sum::<f64>() / k,
            mse,
            rmse: mse.sqrt(),
            mc_se: sd / k.sqrt(),
            coverage: est.iter().filter(|e| e.ci_lo <= tau_ref && tau_ref <= e.ci_hi).count() as f64 / k,
            re: None,
            q2_5: quantile(&sorted, 0.025),
            median: quantile(&sorted, 0.5),
            q97_5: quantile(&sorted, 0.975),
        });
    }
    if let Some(ipw) = summaries.iter().find(|s| s.method == Method::Ipw).map(|s| s.mse) {
        for s in &mut summaries {
            s.re = Some(if s.method == Method::Ipw { 1.0 } else { ipw / s.mse });
        }
    }

    let diags: Vec<WeightDiagnostics> = kept.iter().filter_map(|r| r.weight_diag).collect();
    let avg = |f: fn(&WeightDiagnostics) -> f64| diags.iter().map(f).sum::<f64>() / diags.len() as f64;
    Ok(ScenarioResult {
        name: scn.name.clone(),
        key: ScenarioKey {
            n: scn.n,
            p: scn.p_spec.nominal(),
            trunc: scn.trunc_spec.label(),
            regime: scn.nuisance_regime,
            delta: scn.delta,
        },
        tau_ref,
        mean_tau_rep: kept.iter().map(|r| r.tau_rep).sum::<f64>() / k,
        reps: records.len(),
        excluded,
        methods: summaries,
        weight_diag: WeightDiagnostics {
            mean_w: avg(|d| d.mean_w),
            sd_w: avg(|d| d.sd_w),
            cv_w: avg(|d| d.cv_w),
            max_w: avg(|d| d.max_w),
            trunc_pct: avg(|d| d.trunc_pct),
        },
        runtime_sec: 0.0,
    })
}

/// Runs each scenario in turn.
pub fn run_grid(scenarios: &[Scenario], methods: &[Method], opts: RunOptions) -> Result<Vec<ScenarioResult>> {
    scenarios
        .iter()
        .map(|s| run_scenario_traced(s, methods, opts).map(|r| r.0))
        .collect()
}
