//! Run configuration: a TOML file plus command-line overrides.
//!
//! Precedence is flags > file > defaults. Every key of the effective
//! configuration is tagged with where it came from. Unknown keys are
//! rejected with the key named. The file layout is documented in the
//! README:
//!
//! ```toml
//! seed = 7
//!
//! [output]          # where and how to write; not echoed into payloads
//! dir = "out"
//! format = "both"   # json | csv | both
//!
//! [solve]           # one section per subcommand
//! generator = "example3"
//! terminal = "absBT"
//!
//! [generators.lin]  # user-defined generators, usable by label
//! expr = "2*y"
//! mu = 1
//! flags = ["H2"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bsdelab_core::convolution::{EnvelopeKind, EnvelopePoint, DEFAULT_TOL};
use bsdelab_core::experiments::ExperimentSpec;
use bsdelab_core::generators::ExprGeneratorDef;
use bsdelab_core::solver::SolverConfig;
use bsdelab_core::stochastic::PathMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Envelope,
    Check,
    Solve,
    Experiment,
}

impl Command {
    pub fn id(self) -> &'static str {
        match self {
            Command::Envelope => "envelope",
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Experiment => "experiment",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Csv
    }
    pub fn csv(self) -> bool {
        self != Format::Json
    }
}

/// Output settings. They do not influence results and stay out of the
/// payload echo so that runs written to different places stay comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
    /// File name stem; defaults to `<subcommand>-seed<seed>`.
    pub stem: Option<String>,
    /// Appends the Unix time to file names (never to payloads).
    pub timestamp: bool,
    /// Also write the simulated paths in the binary dump format (`solve`).
    pub dump_paths: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("."), format: Format::Both, stem: None, timestamp: false, dump_paths: None }
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn inf_z() -> EnvelopeKind {
    EnvelopeKind::InfZ
}
fn default_n_list() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32]
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_samples() -> usize {
    100
}
fn four() -> u32 {
    4
}
fn default_steps() -> usize {
    50
}
fn default_paths() -> usize {
    10_000
}
fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.5, 0.95]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    pub generator: String,
    #[serde(default = "inf_z")]
    pub kind: EnvelopeKind,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u32>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Explicit query points; when empty, `samples` points are drawn.
    #[serde(default)]
    pub points: Vec<EnvelopePoint>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sampled `y` and `z` components are uniform on `[-range, range]`.
    #[serde(default = "ten")]
    pub y_range: f64,
    #[serde(default = "ten")]
    pub z_range: f64,
    /// Random pairs for the Hoelder-modulus check (0 disables it).
    #[serde(default)]
    pub modulus_pairs: usize,
    #[serde(default = "four")]
    pub modulus_n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    pub generator: String,
    /// Assumption ids; empty means the generator's claimed set.
    #[serde(default)]
    pub assumptions: Vec<String>,
    /// Also check the implication chain between assumption variants.
    #[serde(default)]
    pub implications: bool,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default)]
    pub z_max: Option<f64>,
    #[serde(default)]
    pub pairs: Option<usize>,
    /// Overrides of the generator's declared constants.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub generator: String,
    pub terminal: String,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub path_mode: PathMode,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Cross-sectional quantiles of `Y` reported per node in the CSV.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Envelope(EnvelopeParams),
    Check(CheckParams),
    Solve(SolveParams),
    Experiment(Box<ExperimentSpec>),
}

impl Params {
    fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Params::Envelope(p) => serde_json::to_value(p),
            Params::Check(p) => serde_json::to_value(p),
            Params::Solve(p) => serde_json::to_value(p),
            Params::Experiment(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Flag,
}

/// The effective configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub params: Params,
    pub generators: BTreeMap<String, ExprGeneratorDef>,
    pub output: OutputConfig,
    /// Source of every leaf key of the echo, by dotted path.
    pub provenance: BTreeMap<String, Source>,
}

impl RunConfig {
    /// Everything needed to regenerate the run, in a stable key order.
    pub fn echo(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert("seed".into(), self.seed.into());
        m.insert(self.command.id().into(), self.params.to_json());
        if !self.generators.is_empty() {
            m.insert("generators".into(), serde_json::to_value(&self.generators).expect("generator defs serialize"));
        }
        serde_json::Value::Object(m)
    }
}

/// Values supplied on the command line, already shaped like the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Keys of the subcommand's section.
    pub section: Table,
    pub output: Table,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    #[serde(default)]
    output: Table,
    envelope: Option<Table>,
    check: Option<Table>,
    solve: Option<Table>,
    experiment: Option<Table>,
    #[serde(default)]
    generators: BTreeMap<String, ExprGeneratorDef>,
}

/// Subtables replaced as a whole by an override instead of merged key by
/// key (their variants have different fields).
const ATOMIC: &[&str] = &["solver.basis", "solver.truncation"];

/// Reads the optional config file and applies `overrides`.
pub fn load_config(command: Command, file: Option<&Path>, overrides: Overrides) -> Result<RunConfig> {
    let text = match file {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?),
        None => None,
    };
    parse_config(command, text.as_deref(), overrides)
}

/// Builds the effective configuration from file text and overrides.
pub fn parse_config(command: Command, file: Option<&str>, overrides: Overrides) -> Result<RunConfig> {
    let fc: FileConfig = match file {
        Some(text) => toml::from_str(text).map_err(|e| LabError::Usage(format!("config file: {}", e.message())))?,
        None => FileConfig::default(),
    };
    let mut provenance = BTreeMap::new();
    let seed = match (overrides.seed, fc.seed) {
        (Some(s), _) => {
            provenance.insert("seed".to_string(), Source::Flag);
            s
        }
        (None, Some(s)) => {
            provenance.insert("seed".to_string(), Source::File);
            s
        }
        (None, None) => {
            return Err(LabError::Usage(
                "missing required field 'seed' (pass --seed or set seed in the config file)".into(),
            ))
        }
    };
    let file_section = match command {
        Command::Envelope => fc.envelope,
        Command::Check => fc.check,
        Command::Solve => fc.solve,
        Command::Experiment => fc.experiment,
    }
    .unwrap_or_default();
    let section = command.id();
    if file_section.contains_key("seed") || overrides.section.contains_key("seed") {
        return Err(LabError::Usage(format!("unknown key '{section}.seed': seed is a top-level key")));
    }
    let mut merged = file_section.clone();
    merge(&mut merged, &overrides.section, "");
    if command == Command::Experiment {
        // Placeholder; the real seed may not fit a TOML integer.
        merged.insert("seed".into(), Value::Integer(0));
    }
    let params = match command {
        Command::Envelope => Params::Envelope(decode(section, &merged)?),
        Command::Check => Params::Check(decode(section, &merged)?),
        Command::Solve => Params::Solve(decode(section, &merged)?),
        Command::Experiment => {
            let mut spec: ExperimentSpec = decode(section, &merged)?;
            spec.seed = seed;
            Params::Experiment(Box::new(spec))
        }
    };
    let mut output_table = fc.output.clone();
    merge(&mut output_table, &overrides.output, "");
    let output: OutputConfig = decode("output", &output_table)?;

    let mut leaves = Vec::new();
    flatten_json(&params.to_json(), section, &mut leaves);
    let from_flags = flat_keys(&overrides.section, section);
    let from_file = flat_keys(&file_section, section);
    for key in leaves {
        if key == format!("{section}.seed") {
            continue;
        }
        let src = if has_prefix_key(&from_flags, &key) {
            Source::Flag
        } else if has_prefix_key(&from_file, &key) {
            Source::File
        } else {
            Source::Default
        };
        provenance.insert(key, src);
    }
    Ok(RunConfig { command, seed, params, generators: fc.generators, output, provenance })
}

/// True when `key` or one of its ancestors was supplied (arrays and
/// atomic tables count as leaves of the source).
fn has_prefix_key(keys: &[String], key: &str) -> bool {
    keys.iter().any(|k| k == key || key.starts_with(&format!("{k}.")) || k.starts_with(&format!("{key}.")))
}

/// Deserializes a table, naming the offending key on failure.
fn decode<T: DeserializeOwned>(section: &str, table: &Table) -> Result<T> {
    let text = toml::to_string(table).map_err(|e| LabError::Usage(format!("[{section}]: {e}")))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.message().trim().to_string();
        // Unknown and missing fields are already named; type errors are
        // attributed to the line the span points into.
        let key = e.span().filter(|_| !msg.contains('`')).and_then(|s| {
            let start = text[..s.start].rfind('\n').map_or(0, |i| i + 1);
            let line = text[start..].lines().next()?;
            let (k, _) = line.split_once('=')?;
            Some(k.trim().trim_matches('"').to_string())
        });
        match key {
            Some(k) => LabError::Usage(format!("[{section}] key '{k}': {msg}")),
            None => LabError::Usage(format!("[{section}]: {msg}")),
        }
    })
}

fn merge(base: &mut Table, over: &Table, prefix: &str) {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if !ATOMIC.contains(&path.as_str()) => merge(b, o, &path),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn flat_keys(t: &Table, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in t {
        let path = format!("{prefix}.{k}");
        match v {
            Value::Table(sub) if !sub.is_empty() => out.extend(flat_keys(sub, &path)),
            _ => out.push(path),
        }
    }
    out
}

fn flatten_json(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) if !m.is_empty() => {
            for (k, sub) in m {
                flatten_json(sub, &format!("{prefix}.{k}"), out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

/// Helpers for building override tables from flags.
pub fn set(table: &mut Table, path: &str, value: impl Into<Value>) {
    let mut parts = path.split('.').peekable();
    let mut cur = table;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(p.to_string(), value.into());
            return;
        }
        cur = match cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            other => {
                *other = Value::Table(Table::new());
                match other {
                    Value::Table(t) => t,
                    _ => unreachable!(),
                }
            }
        };
    }
}

/// Converts any serializable value (enum names, lists) to a TOML value.
pub fn to_toml<T: Serialize>(v: &T) -> Result<Value> {
    Value::try_from(v).map_err(|e| LabError::Usage(e.to_string()))
}
