mod common;

use std::path::Path;
use std::process::{Command, Output};

use excursion_kit::report::read_jsonl;
use excursion_kit::{DecisionRow, PanelDataset, SubjectRecord};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_excursion-kit"));
    c.env_remove("EXCURSION_KIT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn records(path: &Path, kind: &str) -> Vec<Value> {
    read_jsonl(path)
        .unwrap()
        .into_iter()
        .filter(|r| r["record"] == kind)
        .collect()
}

/// Result records with run timing removed.
fn payload(path: &Path) -> String {
    records(path, "scenario_result")
        .into_iter()
        .map(|mut r| {
            r.as_object_mut().unwrap().remove("runtime_sec");
            serde_json::to_string(&r).unwrap()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn single_replication() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    ok(&["simulate", "--reps", "1", "--output", out.to_str().unwrap()]);
    let recs = records(&out, "scenario_result");
    assert_eq!(recs.len(), 3);
    for r in &recs {
        assert!(r["mc_se"].is_number());
        let c = r["coverage"].as_f64().unwrap();
        assert!(c == 0.0 || c == 1.0);
    }
    let manifest = &records(&out, "manifest")[0];
    assert_eq!(manifest["seed"], 20240501);
    assert!(manifest["resolved_config"]["scenarios"][0]["reps"] == 1);
}

#[test]
fn baseline_relative_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    ok(&["simulate", "--output", out.to_str().unwrap()]);
    let dr = records(&out, "scenario_result")
        .into_iter()
        .find(|r| r["method"] == "DR-EMEE")
        .unwrap();
    assert!(dr["re"].as_f64().unwrap() >= 2.0, "{dr}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "methods = \"all\"\nreps = 40\n[base]\nname = \"g\"\nn = 40\nT = 20\n[grid]\np = [0.3, 0.5]\ndelta = [0.0, 0.2]\n",
    )
    .unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--workers", "1", "--output", a.to_str().unwrap()]);
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--workers", "1", "--output", b.to_str().unwrap()]);
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--workers", "4", "--output", c.to_str().unwrap()]);
    let pa = payload(&a);
    assert_eq!(records(&a, "scenario_result").len(), 4 * 3);
    assert_eq!(pa, payload(&b));
    assert_eq!(pa, payload(&c));
    let names: Vec<String> = records(&a, "scenario_result")
        .iter()
        .map(|r| r["scenario"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"g-delta=0.2-p=0.3".to_string()), "{names:?}");
}

#[test]
fn seed_env_fallback_and_flag_priority() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let status = bin()
        .env("EXCURSION_KIT_SEED", "77")
        .args(["simulate", "--reps", "3", "--output", a.to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_eq!(records(&a, "manifest")[0]["seed"], 77);
    let status = bin()
        .env("EXCURSION_KIT_SEED", "77")
        .args(["simulate", "--reps", "3", "--seed", "5", "--output", b.to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_eq!(records(&b, "manifest")[0]["seed"], 5);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[base]\nn = 10\nbogus_key = 3\n").unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn pamap2_estimate_reports_nine_clusters() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pamap2(dir.path());
    let out = dir.path().join("est.jsonl");
    ok(&[
        "estimate", "--data", dir.path().to_str().unwrap(), "--recipe", "pamap2", "--scenario", "S1",
        "--methods", "all", "--output", out.to_str().unwrap(),
    ]);
    let recs = records(&out, "estimate");
    let methods: Vec<&str> = recs.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, vec!["IPW", "EMEE", "DR-EMEE"]);
    for r in &recs {
        assert_eq!(r["clusters"], 9);
        assert_eq!(r["ci_normal"].as_array().unwrap().len(), 2);
        assert_eq!(r["ci_t"].as_array().unwrap().len(), 2);
        assert!(r["ci_t"][0].as_f64().unwrap() <= r["ci_normal"][0].as_f64().unwrap());
    }
    let manifest = &records(&out, "manifest")[0];
    assert_eq!(manifest["input_digests"].as_object().unwrap().len(), 9);
}

#[test]
fn mhealth_estimate_reports_ten_clusters() {
    let dir = tempfile::tempdir().unwrap();
    common::write_mhealth(dir.path());
    let out = run(&["estimate", "--data", dir.path().to_str().unwrap(), "--recipe", "mhealth", "--jsonl", "--omit-influence"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let recs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let est: Vec<&Value> = recs.iter().filter(|r| r["record"] == "estimate").collect();
    assert_eq!(est.len(), 3);
    assert!(est.iter().all(|r| r["clusters"] == 10 && r.get("influence").is_none()));
}

#[test]
fn estimate_echoes_resolved_bounds() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pamap2(dir.path());
    let out = dir.path().join("est.jsonl");
    ok(&[
        "estimate", "--data", dir.path().to_str().unwrap(), "--recipe", "pamap2", "--method", "dr-emee",
        "--trunc", "q:0.01,0.99", "--output", out.to_str().unwrap(),
    ]);
    let recs = records(&out, "estimate");
    assert_eq!(recs.len(), 1);
    let b = recs[0]["bounds"].as_array().unwrap();
    assert!(b[0].as_f64().unwrap() < b[1].as_f64().unwrap());
    assert_eq!(recs[0]["config"]["trunc"], "q:0.01,0.99");
}

#[test]
fn unknown_method_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    common::write_pamap2(dir.path());
    let out = run(&["estimate", "--data", dir.path().to_str().unwrap(), "--recipe", "pamap2", "--methods", "tmle"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["IPW", "EMEE", "DR-EMEE", "DR-EMEE2"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn degenerate_arm_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let mut panel = constant_panel(0.5);
    for s in &mut panel.subjects {
        for r in &mut s.rows {
            r.a = 0;
        }
    }
    panel.save(&p).unwrap();
    let out = run(&["estimate", "--panel", p.to_str().unwrap(), "--nuisance", "design+outcome"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate arm"));
}

fn constant_panel(p: f64) -> PanelDataset {
    let mut panel = PanelDataset::new(vec!["x".into()]);
    for s in 0..4 {
        panel.subjects.push(SubjectRecord {
            subject_id: format!("s{s}"),
            rows: (0..25)
                .map(|t| DecisionRow {
                    t: t + 1,
                    a: ((t + s) % 2) as u8,
                    y: ((t / 2 + s) % 2) as u8,
                    available: 1,
                    covariates: vec![f64::from(t) / 25.0],
                    p_known: Some(p),
                })
                .collect(),
        });
    }
    panel
}

#[test]
fn constant_probability_weights_have_unit_mean() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    constant_panel(0.3).save(&p).unwrap();
    let out = dir.path().join("w.jsonl");
    ok(&["diagnose-weights", "--panel", p.to_str().unwrap(), "--nuisance", "design", "--output", out.to_str().unwrap()]);
    let rows = records(&out, "weights");
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!((r["mean_w"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn extreme_weight_truncated_only_by_tight_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let mut panel = constant_panel(0.5);
    // p̃ = mean(p) = 0.49555, so the single A=1 row at p=0.055 has weight 9.01
    panel.subjects[0].rows[0].p_known = Some(0.055);
    panel.subjects[0].rows[0].a = 1;
    panel.save(&path).unwrap();
    let out = dir.path().join("w.jsonl");
    ok(&[
        "diagnose-weights", "--panel", path.to_str().unwrap(), "--nuisance", "design",
        "--sweep", "0.05,20;0.01,10;0.1,5", "--output", out.to_str().unwrap(),
    ]);
    let rows = records(&out, "weights");
    let pct: Vec<f64> = rows.iter().map(|r| r["trunc_pct"].as_f64().unwrap()).collect();
    assert_eq!(pct[0], 0.0);
    assert_eq!(pct[1], 0.0);
    assert!((pct[2] - 0.01).abs() < 1e-12, "{pct:?}");
    assert!((rows[0]["max_w"].as_f64().unwrap() - 9.01).abs() < 1e-9);
}

#[test]
fn generate_writes_a_panel_archive() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("panel.json");
    ok(&["generate", "--seed", "3", "--output", p.to_str().unwrap()]);
    let panel = PanelDataset::load(&p).unwrap();
    assert_eq!(panel.n_subjects(), 100);
    let est = dir.path().join("e.jsonl");
    ok(&["estimate", "--panel", p.to_str().unwrap(), "--nuisance", "design+outcome", "--critical", "t", "--output", est.to_str().unwrap()]);
    let r = &records(&est, "estimate")[0];
    assert_eq!(r["clusters"], 100);
}

#[test]
fn bad_flags_exit_nonzero() {
    assert_eq!(run(&["simulate", "--trunc", "5,1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--nuisance", "magic"]).status.code(), Some(2));
    assert_eq!(run(&["estimate"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
