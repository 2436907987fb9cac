//! Line-delimited result records, run manifests, and a plain-text table printer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::simulation::{RepRecord, ScenarioResult};
use crate::weights::{TruncSpec, WeightDiagnostics};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub resolved_config: Value,
    pub seed: u64,
    pub artifact_version: String,
    /// SHA-256 hex digest per input file.
    pub input_digests: BTreeMap<String, String>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: impl Into<String>, resolved_config: Value, seed: u64) -> Self {
        Self {
            command: command.into(),
            resolved_config,
            seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            input_digests: BTreeMap::new(),
            started: now(),
            finished: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.input_digests
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished = now();
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn diag_fields(d: Option<&WeightDiagnostics>) -> Value {
    match d {
        Some(d) => json!({
            "mean_w": d.mean_w, "sd_w": d.sd_w, "cv_w": d.cv_w, "max_w": d.max_w, "trunc_pct": d.trunc_pct,
        }),
        None => json!({
            "mean_w": null, "sd_w": null, "cv_w": null, "max_w": null, "trunc_pct": null,
        }),
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(ma), Value::Object(mb)) = (a.as_object_mut(), b) {
        ma.extend(mb);
    }
    a
}

pub fn manifest_record(m: &RunManifest) -> Value {
    merge(json!({ "record": "manifest" }), serde_json::to_value(m).expect("manifest serializes"))
}

/// One record per (scenario, method).
pub fn scenario_records(r: &ScenarioResult) -> Vec<Value> {
    r.methods
        .iter()
        .map(|s| {
            let base = json!({
                "record": "scenario_result",
                "scenario": r.name,
                "n": r.key.n,
                "p": r.key.p,
                "trunc": r.key.trunc,
                "regime": r.key.regime.to_string(),
                "delta": r.key.delta,
                "method": s.method.name(),
                "tau_ref": r.tau_ref,
                "mean_tau_rep": r.mean_tau_rep,
                "reps": r.reps,
                "excluded": r.excluded,
                "mean_tau_hat": s.mean_tau_hat,
                "bias": s.bias,
                "sd": s.sd,
                "mean_se": s.mean_se,
                "mse": s.mse,
                "rmse": s.rmse,
                "mc_se": s.mc_se,
                "coverage": s.coverage,
                "re": s.re,
                "q2.5": s.q2_5,
                "median": s.median,
                "q97.5": s.q97_5,
            });
            let out = merge(base, diag_fields(Some(&r.weight_diag)));
            merge(out, json!({ "runtime_sec": r.runtime_sec }))
        })
        .collect()
}

pub fn trace_records(scenario: &str, recs: &[RepRecord]) -> Vec<Value> {
    recs.iter()
        .map(|r| {
            merge(
                json!({ "record": "replication", "scenario": scenario }),
                serde_json::to_value(r).expect("record serializes"),
            )
        })
        .collect()
}

pub fn estimate_record(r: &EstimateReport, clusters: usize, include_influence: bool) -> Value {
    let inf = r.inference.as_ref();
    let mut v = json!({
        "record": "estimate",
        "method": r.method.name(),
        "tau_hat": r.tau_hat,
        "se_naive": inf.map(|i| i.se_naive),
        "se_corrected": inf.map(|i| i.se_corrected),
        "se_cluster": inf.map(|i| i.se_cluster),
        "ci_lo": inf.map(|i| i.ci_lo),
        "ci_hi": inf.map(|i| i.ci_hi),
        "ci_normal": inf.map(|i| [i.ci_normal.0, i.ci_normal.1]),
        "ci_t": inf.map(|i| [i.ci_t.0, i.ci_t.1]),
        "level": inf.map(|i| i.level),
        "df": inf.map(|i| i.df),
        "clusters": clusters,
        "n_rows": r.n_rows,
        "bounds": r.bounds.map(|b| [b.0, b.1]),
        "warnings": r.warnings,
        "config": r.config_echo,
    });
    v = merge(v, diag_fields(r.weight_diag.as_ref()));
    if include_influence {
        v = merge(v, json!({ "influence": r.influence }));
    }
    v
}

pub fn weight_record(trunc: &TruncSpec, bounds: (f64, f64), d: &WeightDiagnostics) -> Value {
    merge(
        json!({
            "record": "weights",
            "trunc": trunc.label(),
            "lower": bounds.0,
            "upper": bounds.1,
        }),
        diag_fields(Some(d)),
    )
}

pub fn write_jsonl<W: Write>(out: &mut W, records: &[Value]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_file(path: &Path, records: &[Value]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(&mut w, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the records of a JSONL file.
pub fn read_jsonl(path: &Path) -> Result<Vec<Value>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Aligned plain-text table with the given columns pulled from each record.
pub fn render_table(records: &[Value], columns: &[&str]) -> String {
    let cell = |v: &Value| -> String {
        match v {
            Value::Null => "-".into(),
            Value::Number(n) => match n.as_f64() {
                Some(f) if n.is_f64() => format!("{f:.4}"),
                _ => n.to_string(),
            },
            Value::String(s) => s.clone(),
            Value::Array(a) => a.iter().map(cell_inner).collect::<Vec<_>>().join(","),
            other => other.to_string(),
        }
    };
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| columns.iter().map(|c| cell(r.get(*c).unwrap_or(&Value::Null))).collect())
        .collect();
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(j, c)| rows.iter().map(|r| r[j].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, &columns.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    for r in &rows {
        line(&mut out, r);
    }
    out
}

fn cell_inner(v: &Value) -> String {
    match v.as_f64() {
        Some(f) => format!("{f:.4}"),
        None => v.to_string(),
    }
}

pub const SIMULATION_COLUMNS: &[&str] = &[
    "scenario", "method", "tau_ref", "bias", "sd", "mean_se", "rmse", "mc_se", "coverage", "re",
];
pub const ESTIMATE_COLUMNS: &[&str] = &[
    "method", "tau_hat", "se_cluster", "ci_normal", "ci_t", "clusters", "mean_w", "max_w", "trunc_pct",
];
pub const WEIGHT_COLUMNS: &[&str] = &["trunc", "lower", "upper", "mean_w", "sd_w", "cv_w", "max_w", "trunc_pct"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn table_alignment() {
        let recs = vec![
            json!({"method": "IPW", "tau_hat": 0.5, "re": null}),
            json!({"method": "DR-EMEE", "tau_hat": -0.125, "re": 2.0}),
        ];
        let t = render_table(&recs, &["method", "tau_hat", "re"]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "    IPW   0.5000       -");
        assert_eq!(lines[2], "DR-EMEE  -0.1250  2.0000");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.jsonl");
        let recs = vec![json!({"a": 0.1 + 0.2}), json!({"b": [1, 2]})];
        write_jsonl_file(&p, &recs).unwrap();
        assert_eq!(read_jsonl(&p).unwrap(), recs);
    }

    #[test]
    fn manifest_embeds_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, b"abc").unwrap();
        let mut m = RunManifest::new("estimate", json!({"k": 1}), 7);
        m.add_input(&p).unwrap();
        m.finish();
        let rec = manifest_record(&m);
        assert_eq!(rec["record"], "manifest");
        assert_eq!(rec["seed"], 7);
        assert!(rec["input_digests"].as_object().unwrap().values().all(|v| v.as_str().unwrap().starts_with("ba7816bf")));
        assert!(m.finished >= m.started);
    }
}
