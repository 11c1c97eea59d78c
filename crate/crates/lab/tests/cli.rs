//! End-to-end runs of the `bsdelab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bsdelab::report::read_convergence_csv;
use serde_json::Value;

fn bsdelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsdelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("BSDELAB_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn passing_check_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsdelab(&["check", "--seed", "1", "--generator", "example1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("result: PASS"));
    let v = json(&dir.path().join("check-seed1.json"));
    assert_eq!(v["passed"], true);
    assert_eq!(v["subcommand"], "check");
    assert_eq!(v["tables"][0]["name"], "checks");
}

#[test]
fn refuted_assumption_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["check", "--seed", "1", "--generator", "expr:2*y", "--assumptions", "H2", "--mu", "1"];
    let o = bsdelab(&args, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let v = json(&dir.path().join("check-seed1.json"));
    assert_eq!(v["passed"], false);
    assert_eq!(v["provenance"]["check.mu"], "flag");
}

#[test]
fn missing_seed_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsdelab(&["check", "--generator", "example1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("'seed'"), "{}", stderr(&o));
    assert!(!dir.path().join("check-seed1.json").exists());
}

#[test]
fn bad_config_values_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 3\n[solve]\nn_steps = \"many\"\n").unwrap();
    let o = bsdelab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_steps"), "{}", stderr(&o));

    fs::write(&cfg, "seed = 3\n[solve]\nstepz = 4\n").unwrap();
    let o = bsdelab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stepz"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsdelab(&["solve", "--seed", "1", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn heavy_tailed_terminal_needs_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--seed", "2", "--terminal", "expBT2over4", "--generator", "zero", "--N", "4", "--M", "500"];
    let o = bsdelab(&args, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("square integrable"), "{}", stderr(&o));
    let mut with_trunc = args.to_vec();
    with_trunc.extend(["--truncation", "10"]);
    let o = bsdelab(&with_trunc, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_are_merged_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"seed = 7

[solve]
generator = "mine"
terminal = "BT"
n_steps = 8
paths = 4000

[solve.solver.basis]
kind = "local"
bins = 8

[generators.mine]
expr = "-y"
mu = 0.0
flags = ["H1", "H2"]
"#,
    )
    .unwrap();
    let o = bsdelab(&["solve", "--config", cfg.to_str().unwrap(), "--M", "3000", "--stem", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&dir.path().join("run.json"));
    let p = &v["provenance"];
    assert_eq!(p["seed"], "file");
    assert_eq!(p["solve.paths"], "flag");
    assert_eq!(p["solve.n_steps"], "file");
    assert_eq!(p["solve.generator"], "file");
    assert_eq!(p["solve.horizon"], "default");
    assert_eq!(v["config"]["solve"]["paths"], 3000);
    assert_eq!(v["config"]["generators"]["mine"]["expr"], "-y");
    // Y_0 = e^{-1} E[B_1] = 0.
    let y0 = v["results"][0]["y0"].as_f64().unwrap();
    let se = v["results"][0]["y0_stderr"].as_f64().unwrap();
    assert!(y0.abs() <= 4.0 * se + 1e-3, "y0 = {y0} +- {se}");
}

#[test]
fn csv_tables_match_the_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "experiment",
        "--seed",
        "5",
        "--theorem",
        "T3_levi",
        "--generator",
        "zero",
        "--terminal",
        "BT2",
        "--N",
        "4",
        "--M",
        "4000",
        "--levels",
        "1,2,4,8",
        "--format",
        "both",
    ];
    let o = bsdelab(&args, dir.path());
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    let v = json(&dir.path().join("experiment-seed5.json"));
    let table = v["tables"].as_array().unwrap().iter().find(|t| t["name"] == "levi").unwrap();
    let rows = read_convergence_csv(&fs::read(dir.path().join("experiment-seed5-levi.csv")).unwrap()).unwrap();
    let json_rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.len(), json_rows.len());
    for (r, j) in rows.iter().zip(json_rows) {
        assert_eq!(r.n_or_level, j[0].as_f64().unwrap());
        assert_eq!(r.y0.to_bits(), j[1].as_f64().unwrap().to_bits());
        assert_eq!(r.stderr.to_bits(), j[2].as_f64().unwrap().to_bits());
        assert_eq!(r.gap, j[3].as_f64());
        assert_eq!(r.verdict, j[4].as_str().unwrap());
    }
}

#[test]
fn csv_only_format_skips_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsdelab(&["check", "--seed", "9", "--generator", "example3", "--format", "csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("check-seed9-checks.csv").exists());
    assert!(!dir.path().join("check-seed9.json").exists());
}

#[test]
fn path_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("paths.bin");
    let args = [
        "solve",
        "--seed",
        "4",
        "--generator",
        "zero",
        "--terminal",
        "BT2",
        "--N",
        "6",
        "--M",
        "100",
        "--dump-paths",
        dump.to_str().unwrap(),
    ];
    let o = bsdelab(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let b = bsdelab::pathio::load(&dump).unwrap();
    assert_eq!((b.paths(), b.grid().n_steps(), b.dim(), b.seed()), (100, 6, 1, 4));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["envelope", "--seed", "3", "--generator", "example1", "--samples", "10", "--n", "1,2,4"];
    let oa = bsdelab(&args, a.path());
    let ob = bsdelab(&args, b.path());
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(oa.stdout.len(), ob.stdout.len());
    for name in ["envelope-seed3.json", "envelope-seed3-envelope.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
