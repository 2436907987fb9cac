//! Command-line front end: `simulate`, `estimate`, `diagnose-weights`, `generate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{analyze, AnalysisConfig};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::ingestion::{self, DerivationRecipe, LongTableSpec, Preset, ScenarioId};
use crate::nuisance::{estimate_nuisance, NuisanceMode};
use crate::panel::PanelDataset;
use crate::report::{self, RunManifest};
use crate::simulation::{self, run_scenario_traced, RunOptions, Scenario};
use crate::variance::{ClusterAdjustment, Critical, InferenceConfig, SeBasis};
use crate::weights::{build_weights, TruncSpec, WeightScheme, SWEEP_PRESETS};

pub const SEED_ENV: &str = "EXCURSION_KIT_SEED";

#[derive(Debug, Parser)]
#[command(name = "excursion-kit", version, about = "Excursion-effect estimation for micro-randomized trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulation scenarios and aggregate per-method metrics.
    Simulate(SimulateArgs),
    /// Estimate the excursion effect on a panel or a wearable dataset.
    Estimate(EstimateArgs),
    /// Weight diagnostics across a sweep of truncation bounds.
    DiagnoseWeights(DiagnoseArgs),
    /// Write one simulated replication as a panel archive.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonFlags {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to EXCURSION_KIT_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods, or `all`.
    #[arg(long, alias = "method")]
    pub methods: Option<String>,
    /// `none`, `L,U`, or `q:lo,hi`.
    #[arg(long)]
    pub trunc: Option<String>,
    /// per-decision or cumulative.
    #[arg(long)]
    pub scheme: Option<String>,
    /// design, design+outcome, fit, or crossfit:K.
    #[arg(long)]
    pub nuisance: Option<String>,
    /// normal or t.
    #[arg(long)]
    pub critical: Option<String>,
    /// Output file (JSON lines).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print JSON lines to stdout instead of a table.
    #[arg(long)]
    pub jsonl: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonFlags,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write per-replication records to `<output>.trace.jsonl`.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct InputFlags {
    /// Panel archive (JSON).
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Dataset directory or subject files for `--recipe`.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// pamap2 or mhealth.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Covariate variant S1..S4.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Keep every k-th derived row.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    pub input: InputFlags,
    /// none, hc2, or hc3.
    #[arg(long)]
    pub adjustment: Option<String>,
    /// naive, corrected, or cluster.
    #[arg(long)]
    pub se_basis: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Leave influence vectors out of the report.
    #[arg(long)]
    pub omit_influence: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    pub input: InputFlags,
    /// Truncation settings to sweep, separated by `;`.
    #[arg(long)]
    pub sweep: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replication index.
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let command_line = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    match run(cli.command, &command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub fn run(cmd: Command, command_line: &str) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a, command_line),
        Command::Estimate(a) => cmd_estimate(&a, command_line),
        Command::DiagnoseWeights(a) => cmd_diagnose_weights(&a, command_line),
        Command::Generate(a) => cmd_generate(&a),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn read_toml(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- simulate

/// Keys accepted in a simulation config besides scenario fields.
const SIM_SECTIONS: &[&str] = &["base", "grid", "scenarios", "methods"];

fn grid_key(k: &str) -> &str {
    match k {
        "p" => "p_spec",
        "trunc" => "trunc_spec",
        "regime" => "nuisance_regime",
        other => other,
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Expands `[base]`, `[grid]`, and `[[scenarios]]` into scenario tables.
pub fn expand_config(cfg: &toml::Table) -> Result<Vec<toml::Table>> {
    let mut base = match cfg.get("base") {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(Error::Config("`base` must be a table".into())),
        None => toml::Table::new(),
    };
    for (k, v) in cfg {
        if !SIM_SECTIONS.contains(&k.as_str()) {
            base.insert(k.clone(), v.clone());
        }
    }
    let explicit: Vec<toml::Table> = match cfg.get("scenarios") {
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|i| match i {
                toml::Value::Table(t) => Ok(t.clone()),
                _ => Err(Error::Config("`scenarios` entries must be tables".into())),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Config("`scenarios` must be an array of tables".into())),
        None => vec![toml::Table::new()],
    };
    let grid: Vec<(String, Vec<toml::Value>)> = match cfg.get("grid") {
        Some(toml::Value::Table(g)) => g
            .iter()
            .map(|(k, v)| match v {
                toml::Value::Array(a) if !a.is_empty() => Ok((k.clone(), a.clone())),
                _ => Err(Error::Config(format!("grid.{k} must be a non-empty array"))),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Config("`grid` must be a table".into())),
        None => Vec::new(),
    };

    let mut out = Vec::new();
    for sc in explicit {
        let mut merged = base.clone();
        merged.extend(sc);
        let base_name = merged
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or("scenario")
            .to_string();
        let mut cells: Vec<(toml::Table, String)> = vec![(merged, base_name)];
        for (k, values) in &grid {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for (t, name) in &cells {
                for v in values {
                    let mut t = t.clone();
                    t.insert(grid_key(k).to_string(), v.clone());
                    next.push((t, format!("{name}-{k}={}", value_label(v))));
                }
            }
            cells = next;
        }
        for (mut t, name) in cells {
            t.insert("name".into(), toml::Value::String(name));
            out.push(t);
        }
    }
    Ok(out)
}

fn parse_scenario(t: toml::Table) -> Result<Scenario> {
    let name = t.get("name").and_then(|v| v.as_str()).unwrap_or("scenario").to_string();
    toml::Value::Table(t)
        .try_into::<Scenario>()
        .map_err(|e| Error::Config(format!("scenario `{name}`: {e}")))
}

fn methods_from_config(cfg: &toml::Table) -> Result<Option<Vec<Method>>> {
    match cfg.get("methods") {
        None => Ok(None),
        Some(toml::Value::String(s)) => Method::parse_list(s).map(Some),
        Some(toml::Value::Array(a)) => {
            let names: Vec<String> = a.iter().map(value_label).collect();
            Method::parse_list(&names.join(",")).map(Some)
        }
        Some(_) => Err(Error::Config("`methods` must be a string or an array".into())),
    }
}

/// Scenarios and methods described by a simulation config document.
pub fn scenarios_from_str(text: &str) -> Result<(Vec<Scenario>, Vec<Method>)> {
    let cfg: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("simulation config: {e}")))?;
    let scenarios = expand_config(&cfg)?
        .into_iter()
        .map(parse_scenario)
        .collect::<Result<Vec<_>>>()?;
    for s in &scenarios {
        s.validate()?;
    }
    let methods = methods_from_config(&cfg)?.unwrap_or_else(|| Method::STANDARD.to_vec());
    Ok((scenarios, methods))
}

/// Scenarios after merging the config file with command-line overrides.
pub fn resolve_scenarios(a: &SimulateArgs) -> Result<(Vec<Scenario>, Vec<Method>)> {
    let cfg = match &a.common.config {
        Some(p) => read_toml(p)?,
        None => toml::Table::new(),
    };
    let mut tables = expand_config(&cfg)?;
    let env = env_seed()?;
    let c = &a.common;
    for t in &mut tables {
        let seed = c.seed.or_else(|| if t.contains_key("seed") { None } else { env });
        if let Some(s) = seed {
            t.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        if let Some(r) = a.reps {
            t.insert("reps".into(), toml::Value::Integer(r as i64));
        }
        if let Some(v) = &c.trunc {
            TruncSpec::parse(v)?;
            t.insert("trunc_spec".into(), toml::Value::String(v.clone()));
        }
        if let Some(v) = &c.scheme {
            t.insert("scheme".into(), toml::Value::String(WeightScheme::parse(v)?.to_string()));
        }
        if let Some(v) = &c.nuisance {
            NuisanceMode::parse(v, 0)?;
            t.insert("analyst".into(), toml::Value::String(v.clone()));
        }
        if let Some(v) = &c.critical {
            Critical::parse(v)?;
            let inf = t
                .entry("inference")
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match inf {
                toml::Value::Table(i) => {
                    i.insert("critical".into(), toml::Value::String(v.clone()));
                }
                _ => return Err(Error::Config("`inference` must be a table".into())),
            }
        }
    }
    let scenarios = tables.into_iter().map(parse_scenario).collect::<Result<Vec<_>>>()?;
    for s in &scenarios {
        s.validate()?;
    }
    let methods = match &c.methods {
        Some(m) => Method::parse_list(m)?,
        None => methods_from_config(&cfg)?.unwrap_or_else(|| Method::STANDARD.to_vec()),
    };
    Ok((scenarios, methods))
}

fn emit(common: &CommonFlags, records: &[Value], columns: &[&str]) -> Result<()> {
    if let Some(p) = &common.output {
        report::write_jsonl_file(p, records)?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let body: Vec<Value> = records
        .iter()
        .filter(|r| r.get("record").and_then(|v| v.as_str()) != Some("manifest"))
        .cloned()
        .collect();
    let res = if common.jsonl {
        report::write_jsonl(&mut out, records)
    } else {
        out.write_all(report::render_table(&body, columns).as_bytes())
    };
    res.map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_simulate(a: &SimulateArgs, command_line: &str) -> Result<()> {
    let (scenarios, methods) = resolve_scenarios(a)?;
    let seed = scenarios.first().map_or(0, |s| s.seed);
    let resolved = json!({
        "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "scenarios": scenarios,
    });
    let mut manifest = RunManifest::new(command_line, resolved, seed);
    if let Some(p) = &a.common.config {
        manifest.add_input(p)?;
    }
    let opts = RunOptions {
        workers: a.workers,
        trace: a.trace,
    };
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for s in &scenarios {
        let (res, trace) = run_scenario_traced(s, &methods, opts)?;
        records.extend(report::scenario_records(&res));
        if a.trace {
            traces.extend(report::trace_records(&s.name, &trace));
        }
    }
    manifest.finish();
    let mut all = vec![report::manifest_record(&manifest)];
    all.extend(records);
    if a.trace {
        let out = a
            .common
            .output
            .as_ref()
            .ok_or_else(|| Error::Config("--trace needs --output".into()))?;
        let mut tr = vec![report::manifest_record(&manifest)];
        tr.extend(traces);
        report::write_jsonl_file(&trace_path(out), &tr)?;
    }
    emit(&a.common, &all, report::SIMULATION_COLUMNS)
}

pub fn trace_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".trace.jsonl");
    PathBuf::from(s)
}

// ---------------------------------------------------------------- estimate

/// Resolved estimation settings; every key may appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    pub panel: Option<PathBuf>,
    pub data: Vec<PathBuf>,
    pub recipe: Option<String>,
    pub scenario: Option<String>,
    pub stride: usize,
    pub methods: String,
    pub nuisance: String,
    pub scheme: String,
    pub trunc: String,
    pub critical: String,
    pub adjustment: String,
    pub se_basis: String,
    pub level: f64,
    pub seed: u64,
    pub ridge_lambda: f64,
    pub treatment_columns: Option<Vec<String>>,
    pub outcome_columns: Option<Vec<String>>,
    pub moderators: Option<Vec<String>>,
    /// Sweep for `diagnose-weights`, `;`-separated.
    pub sweep: Option<String>,
    /// Generic long-table input.
    pub ingest: Option<IngestConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub table: LongTableSpec,
    pub recipe: DerivationRecipe,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            panel: None,
            data: Vec::new(),
            recipe: None,
            scenario: None,
            stride: 1,
            methods: "all".into(),
            nuisance: "fit".into(),
            scheme: WeightScheme::PerDecision.to_string(),
            trunc: TruncSpec::default().label(),
            critical: "normal".into(),
            adjustment: "none".into(),
            se_basis: "cluster".into(),
            level: 0.95,
            seed: 0,
            ridge_lambda: crate::logistic::DEFAULT_RIDGE,
            treatment_columns: None,
            outcome_columns: None,
            moderators: None,
            sweep: None,
            ingest: None,
        }
    }
}

fn resolve_estimate(common: &CommonFlags, input: &InputFlags) -> Result<EstimateOptions> {
    let mut o: EstimateOptions = match &common.config {
        Some(p) => toml::Value::Table(read_toml(p)?)
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => EstimateOptions {
            seed: env_seed()?.unwrap_or(0),
            ..EstimateOptions::default()
        },
    };
    if common.config.is_some() && o.seed == 0 {
        o.seed = env_seed()?.unwrap_or(0);
    }
    macro_rules! set {
        ($flag:expr, $field:ident) => {
            if let Some(v) = &$flag {
                o.$field = v.clone();
            }
        };
    }
    set!(common.methods, methods);
    set!(common.nuisance, nuisance);
    set!(common.scheme, scheme);
    set!(common.trunc, trunc);
    set!(common.critical, critical);
    if let Some(s) = common.seed {
        o.seed = s;
    }
    if input.panel.is_some() {
        o.panel = input.panel.clone();
    }
    if !input.data.is_empty() {
        o.data = input.data.clone();
    }
    if input.recipe.is_some() {
        o.recipe = input.recipe.clone();
    }
    if input.scenario.is_some() {
        o.scenario = input.scenario.clone();
    }
    if let Some(k) = input.stride {
        o.stride = k;
    }
    Ok(o)
}

impl EstimateOptions {
    pub fn analysis_config(&self) -> Result<AnalysisConfig> {
        Ok(AnalysisConfig {
            methods: Method::parse_list(&self.methods)?,
            nuisance: NuisanceMode::parse(&self.nuisance, self.seed)?,
            scheme: WeightScheme::parse(&self.scheme)?,
            trunc: TruncSpec::parse(&self.trunc)?,
            inference: InferenceConfig {
                level: self.level,
                critical: Critical::parse(&self.critical)?,
                adjustment: ClusterAdjustment::parse(&self.adjustment)?,
                se_basis: SeBasis::parse(&self.se_basis)?,
                ..InferenceConfig::default()
            },
            treatment_columns: self.treatment_columns.clone(),
            outcome_columns: self.outcome_columns.clone(),
            moderators: self.moderators.clone(),
            ridge_lambda: self.ridge_lambda,
        })
    }

    /// Loads or derives the panel and lists the files read.
    pub fn load_panel(&self) -> Result<(PanelDataset, Vec<PathBuf>)> {
        let sources = [self.panel.is_some(), !self.data.is_empty(), self.ingest.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(
                "give exactly one input: --panel, --data with --recipe, or an [ingest] config section".into(),
            ));
        }
        let (panel, files) = if let Some(p) = &self.panel {
            (PanelDataset::load(p)?, vec![p.clone()])
        } else if let Some(ing) = &self.ingest {
            let raw = ingestion::load_long_table(&ing.table)?;
            (
                ingestion::derive_panel(&raw, &ing.recipe, &ing.table)?,
                vec![ing.table.path.clone()],
            )
        } else {
            let preset = Preset::parse(
                self.recipe
                    .as_deref()
                    .ok_or_else(|| Error::Config("--data needs --recipe pamap2|mhealth".into()))?,
            )?;
            let mut files = Vec::new();
            for d in &self.data {
                if d.is_dir() {
                    files.extend(ingestion::preset_files(d, preset)?);
                } else {
                    files.push(d.clone());
                }
            }
            (ingestion::load_preset(&files, preset, self.stride)?, files)
        };
        let panel = match &self.scenario {
            Some(s) => ingestion::scenario_slices(&panel, ScenarioId::parse(s)?)?,
            None => panel,
        };
        Ok((panel, files))
    }
}

pub fn cmd_estimate(a: &EstimateArgs, command_line: &str) -> Result<()> {
    let mut o = resolve_estimate(&a.common, &a.input)?;
    if let Some(v) = &a.adjustment {
        o.adjustment = v.clone();
    }
    if let Some(v) = &a.se_basis {
        o.se_basis = v.clone();
    }
    if let Some(v) = a.level {
        o.level = v;
    }
    let cfg = o.analysis_config()?;
    let (panel, files) = o.load_panel()?;
    let echo = serde_json::to_value(&o)?;
    let mut manifest = RunManifest::new(command_line, echo.clone(), o.seed);
    for f in files.iter().chain(a.common.config.iter()) {
        manifest.add_input(f)?;
    }
    let out = analyze(&panel, &cfg)?;
    manifest.finish();
    let mut records = vec![report::manifest_record(&manifest)];
    for mut r in out.reports {
        r.config_echo = json!({
            "nuisance": cfg.nuisance.label(),
            "scheme": cfg.scheme.to_string(),
            "trunc": cfg.trunc.label(),
            "scenario": o.scenario,
        });
        records.push(report::estimate_record(&r, panel.n_subjects(), !a.omit_influence));
    }
    emit(&a.common, &records, report::ESTIMATE_COLUMNS)
}

// ---------------------------------------------------------------- diagnose-weights

pub fn sweep_specs(s: Option<&str>) -> Result<Vec<TruncSpec>> {
    match s {
        Some(s) => s.split(';').filter(|p| !p.trim().is_empty()).map(TruncSpec::parse).collect(),
        None => Ok(SWEEP_PRESETS
            .iter()
            .map(|&(lower, upper)| TruncSpec::Fixed { lower, upper })
            .collect()),
    }
}

pub fn cmd_diagnose_weights(a: &DiagnoseArgs, command_line: &str) -> Result<()> {
    let mut o = resolve_estimate(&a.common, &a.input)?;
    if a.sweep.is_some() {
        o.sweep = a.sweep.clone();
    }
    let cfg = o.analysis_config()?;
    let specs = sweep_specs(o.sweep.as_deref())?;
    let (panel, files) = o.load_panel()?;
    panel.ensure_valid()?;
    let mut manifest = RunManifest::new(command_line, serde_json::to_value(&o)?, o.seed);
    for f in files.iter().chain(a.common.config.iter()) {
        manifest.add_input(f)?;
    }
    let fits = estimate_nuisance(&panel, &cfg.nuisance_spec(&panel), cfg.nuisance)?;
    let mut rows = Vec::new();
    for spec in &specs {
        let w = build_weights(&panel, &fits, cfg.scheme, spec)?;
        rows.push(report::weight_record(spec, w.bounds, &w.diagnostics));
    }
    manifest.finish();
    let mut records = vec![report::manifest_record(&manifest)];
    records.extend(rows);
    emit(&a.common, &records, report::WEIGHT_COLUMNS)
}

// ---------------------------------------------------------------- generate

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => read_toml(p)?,
        None => toml::Table::new(),
    };
    let tables = expand_config(&cfg)?;
    if tables.len() != 1 {
        return Err(Error::Config(format!(
            "generate needs a single scenario, config expands to {}",
            tables.len()
        )));
    }
    let mut t = tables.into_iter().next().expect("one table");
    if let Some(s) = a.seed.or(env_seed()?.filter(|_| !t.contains_key("seed"))) {
        t.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let scn = parse_scenario(t)?;
    scn.validate()?;
    let g = simulation::generate(&scn, a.rep)?;
    g.panel.save(&a.output)
}
