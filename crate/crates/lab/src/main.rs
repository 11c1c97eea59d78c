//! `bsdelab` command-line tool.
//!
//! Exit codes: 0 when every asserted property passed, 2 when at least one
//! failed, 1 on usage or operational errors.

use std::path::PathBuf;
use std::process::ExitCode;

use bsdelab::commands;
use bsdelab::config::{load_config, set, to_toml, Command, Format, Overrides};
use bsdelab::exec::Parallel;
use bsdelab::{LabError, Result};
use bsdelab_core::convolution::EnvelopeKind;
use bsdelab_core::experiments::TheoremId;
use bsdelab_core::regression::BasisSpec;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsdelab", version, about = "Numerical laboratory for BSDEs with integrable terminal data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate inf/sup-convolution approximants and check their properties.
    Envelope(EnvelopeArgs),
    /// Check structural assumptions of a generator on a sampling lattice.
    Check(CheckArgs),
    /// Solve a BSDE by regression Monte Carlo.
    Solve(SolveArgs),
    /// Run a theorem experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, visible_alias = "spec")]
    config: Option<PathBuf>,
    /// Seed of every random stream in the run (required, here or in the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// File name stem for the outputs.
    #[arg(long)]
    stem: Option<String>,
    /// Append the Unix time to output file names.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    generator: Option<String>,
    /// inf_z, sup_z, inf_yz or sup_yz.
    #[arg(long)]
    kind: Option<String>,
    /// Envelope indices, comma separated and increasing.
    #[arg(long = "n", value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    y_range: Option<f64>,
    #[arg(long)]
    z_range: Option<f64>,
    #[arg(long)]
    modulus_pairs: Option<usize>,
    #[arg(long)]
    modulus_n: Option<u32>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    generator: Option<String>,
    /// Assumption ids (e.g. H1,H2,H4'); default: the claimed set.
    #[arg(long, value_delimiter = ',')]
    assumptions: Option<Vec<String>>,
    #[arg(long)]
    implications: bool,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    z_max: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    terminal: Option<String>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Time steps.
    #[arg(long = "N")]
    n_steps: Option<usize>,
    /// Paths.
    #[arg(long = "M")]
    paths: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// independent or nested.
    #[arg(long)]
    path_mode: Option<String>,
    /// Polynomial basis of this degree.
    #[arg(long, conflicts_with = "bins")]
    degree: Option<usize>,
    /// Local basis with this many equiprobable bins.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    picard_iters: Option<usize>,
    #[arg(long)]
    picard_tol: Option<f64>,
    /// Truncation level of the terminal condition.
    #[arg(long)]
    truncation: Option<f64>,
    /// cap, clamp or cutoff (default cap).
    #[arg(long, requires = "truncation")]
    truncation_mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Also write the simulated paths to this file.
    #[arg(long)]
    dump_paths: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Theorem id, e.g. T1_minimal or T10_uniqueness.
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    terminal: Option<String>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long = "N")]
    n_steps: Option<usize>,
    #[arg(long = "M")]
    paths: Option<usize>,
    #[arg(long = "n", value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    path_mode: Option<String>,
}

/// Collects the flags that were given into an override table.
struct Flags {
    o: Overrides,
}

impl Flags {
    fn new(c: &Common) -> Self {
        let mut o = Overrides { seed: c.seed, ..Default::default() };
        if let Some(d) = &c.out {
            set(&mut o.output, "dir", d.to_string_lossy().into_owned());
        }
        if let Some(f) = c.format {
            set(&mut o.output, "format", to_toml(&f).expect("format serializes"));
        }
        if let Some(s) = &c.stem {
            set(&mut o.output, "stem", s.clone());
        }
        if c.timestamp {
            set(&mut o.output, "timestamp", true);
        }
        Self { o }
    }

    fn put<T: serde::Serialize>(&mut self, key: &str, v: &Option<T>) -> Result<()> {
        if let Some(v) = v {
            set(&mut self.o.section, key, to_toml(v)?);
        }
        Ok(())
    }

    fn count(&mut self, key: &str, v: Option<usize>) -> Result<()> {
        self.put(key, &v.map(|k| k as i64))
    }
}

fn overrides(cmd: &Cmd) -> Result<(Command, Option<PathBuf>, Overrides)> {
    let (command, common) = match cmd {
        Cmd::Envelope(a) => (Command::Envelope, &a.common),
        Cmd::Check(a) => (Command::Check, &a.common),
        Cmd::Solve(a) => (Command::Solve, &a.common),
        Cmd::Experiment(a) => (Command::Experiment, &a.common),
    };
    let mut f = Flags::new(common);
    match cmd {
        Cmd::Envelope(a) => {
            f.put("generator", &a.generator)?;
            let kind = a.kind.as_deref().map(EnvelopeKind::parse).transpose()?;
            f.put("kind", &kind)?;
            f.put("n_list", &a.n_list)?;
            f.count("samples", a.samples)?;
            f.put("tol", &a.tol)?;
            f.put("horizon", &a.horizon)?;
            f.count("dim", a.dim)?;
            f.put("y_range", &a.y_range)?;
            f.put("z_range", &a.z_range)?;
            f.count("modulus_pairs", a.modulus_pairs)?;
            f.put("modulus_n", &a.modulus_n)?;
        }
        Cmd::Check(a) => {
            f.put("generator", &a.generator)?;
            f.put("assumptions", &a.assumptions)?;
            if a.implications {
                f.put("implications", &Some(true))?;
            }
            f.put("horizon", &a.horizon)?;
            f.count("dim", a.dim)?;
            f.put("z_max", &a.z_max)?;
            f.count("pairs", a.pairs)?;
            f.put("mu", &a.mu)?;
            f.put("lambda", &a.lambda)?;
            f.put("alpha", &a.alpha)?;
            f.put("c", &a.c)?;
            f.put("gamma", &a.gamma)?;
        }
        Cmd::Solve(a) => {
            f.put("generator", &a.generator)?;
            f.put("terminal", &a.terminal)?;
            f.put("horizon", &a.horizon)?;
            f.count("n_steps", a.n_steps)?;
            f.count("paths", a.paths)?;
            f.count("dim", a.dim)?;
            f.put("path_mode", &a.path_mode)?;
            let basis = match (a.degree, a.bins) {
                (Some(degree), _) => Some(BasisSpec::Polynomial { degree }),
                (_, Some(bins)) => Some(BasisSpec::Local { bins }),
                _ => None,
            };
            f.put("solver.basis", &basis)?;
            f.count("solver.picard_iters", a.picard_iters)?;
            f.put("solver.picard_tol", &a.picard_tol)?;
            if let Some(level) = a.truncation {
                let mut t = toml::Table::new();
                t.insert("mode".into(), a.truncation_mode.clone().unwrap_or_else(|| "cap".into()).into());
                t.insert("level".into(), level.into());
                set(&mut f.o.section, "solver.truncation", toml::Value::Table(t));
            }
            f.put("quantiles", &a.quantiles)?;
            if let Some(p) = &a.dump_paths {
                set(&mut f.o.output, "dump_paths", p.to_string_lossy().into_owned());
            }
        }
        Cmd::Experiment(a) => {
            let theorem = a.theorem.as_deref().map(TheoremId::parse).transpose()?;
            f.put("theorem", &theorem)?;
            f.put("generator", &a.generator)?;
            f.put("terminal", &a.terminal)?;
            f.put("horizon", &a.horizon)?;
            f.count("n_steps", a.n_steps)?;
            f.count("paths", a.paths)?;
            f.put("n_list", &a.n_list)?;
            f.put("levels", &a.levels)?;
            f.put("path_mode", &a.path_mode)?;
        }
    }
    Ok((command, common.config.clone(), f.o))
}

fn run(cli: Cli) -> Result<bool> {
    let (command, file, o) = overrides(&cli.cmd)?;
    let rc = load_config(command, file.as_deref(), o)?;
    let exec = Parallel::from_env()?;
    let out = commands::run(&rc, &exec)?;
    for line in &out.summary {
        println!("{line}");
    }
    for p in bsdelab::report::emit_report(&out.report, &rc)? {
        println!("wrote {}", p.display());
    }
    println!("result: {}", if out.report.passed { "PASS" } else { "FAIL" });
    Ok(out.report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            if let LabError::Core(inner) = &e {
                if inner.root() != inner {
                    eprintln!("cause: {}", inner.root());
                }
            }
            ExitCode::from(1)
        }
    }
}
