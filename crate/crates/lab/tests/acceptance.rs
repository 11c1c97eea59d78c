//! Acceptance gate. Prints one `criterion N: PASS/FAIL` line per criterion
//! and exits nonzero when any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bsdelab::exec::{envelope_sequence_par, simulate, Parallel};
use bsdelab_core::assumptions::{check_assumption, check_claimed, Lattice};
use bsdelab_core::convolution::{envelope, holder_modulus_check, EnvelopeKind, EnvelopePoint, EnvelopeQuery};
use bsdelab_core::experiments::{run_on, ExperimentSpec, TheoremId};
use bsdelab_core::generators::{
    constant, example1, example3, generator_by_label, neg_y, terminal_by_label, Assumption, ExprGeneratorDef,
    GeneratorSpec,
};
use bsdelab_core::regression::BasisSpec;
use bsdelab_core::rng::{CounterRng, DrawKey};
use bsdelab_core::solver::{paired_stderr, solve_with, SolveResult, SolverConfig};
use bsdelab_core::stochastic::{make_grid, PathBundle, PathMode};

const TOL: f64 = 2e-6;
const ENV_TOL: f64 = 1e-6;
const SEED: u64 = 20240601;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn expr_def(expr: &str, flags: &[&str]) -> ExprGeneratorDef {
    ExprGeneratorDef {
        expr: expr.into(),
        dim: 1,
        label: None,
        mu: None,
        lambda: None,
        alpha: None,
        c: None,
        gamma: None,
        f: None,
        rho_slope: None,
        phi_slope: None,
        flags: flags.iter().map(|s| s.to_string()).collect(),
    }
}

fn paths(exec: &Parallel, n_steps: usize, m: usize, seed: u64) -> PathBundle {
    let grid = make_grid(1.0, n_steps).unwrap();
    simulate(exec, &grid, 1, m, seed, PathMode::Independent).unwrap()
}

fn solve(exec: &Parallel, g: &GeneratorSpec, xi: &str, p: &PathBundle, cfg: &SolverConfig) -> SolveResult {
    let xi = terminal_by_label(xi, 1, 1.0).unwrap();
    solve_with(&xi, g, p, cfg, exec).unwrap()
}

/// Envelope of `sqrt|z|` equals `sqrt|z|` for every `n`.
fn criterion1() -> Outcome {
    let mut def = expr_def("sqrt(abs(z))", &["H4"]);
    def.lambda = Some(1.0);
    def.alpha = Some(0.5);
    let g = def.build(1.0).unwrap();
    let rng = CounterRng::new(SEED);
    let zs: Vec<f64> = (0..1000u64).map(|k| -10.0 + 20.0 * rng.uniform(DrawKey::new(k, 0, 0, 1))).collect();
    let ns = [1u32, 2, 3, 4, 8, 16, 32, 64, 128, 1024];
    let start = Instant::now();
    let mut values = Vec::with_capacity(ns.len());
    for &n in &ns {
        let row: Vec<f64> = zs
            .iter()
            .map(|&z| {
                let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.0, z: vec![z] };
                envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, n, &p).with_tol(ENV_TOL)).unwrap().value
            })
            .collect();
        values.push(row);
    }
    let elapsed = start.elapsed();
    // Oracle: minimum of sqrt|z+s| + (n+1) sqrt|s| over s on a grid of step
    // 1e-3 in [-25, 25].
    let mut worst_exact = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for (row, &n) in values.iter().zip(&ns) {
        let c = n as f64 + 1.0;
        for (&v, &z) in row.iter().zip(&zs) {
            let oracle = (-25_000..=25_000)
                .map(|k| k as f64 * 1e-3)
                .map(|s| (z + s).abs().sqrt() + c * s.abs().sqrt())
                .fold(f64::INFINITY, f64::min);
            worst_exact = worst_exact.max((v - z.abs().sqrt()).abs());
            worst_oracle = worst_oracle.max((v - oracle).abs());
        }
    }
    let ok = worst_exact <= TOL && worst_oracle <= TOL;
    let detail = format!("max |env - sqrt|z|| = {worst_exact:.2e}, max |env - grid oracle| = {worst_oracle:.2e}");
    if ok {
        within(elapsed, Duration::from_secs(10), detail)
    } else {
        Err(detail)
    }
}

fn random_points(n: usize, seed: u64) -> Vec<EnvelopePoint> {
    let rng = CounterRng::new(seed);
    (0..n as u64)
        .map(|k| {
            let key = |i: u32| DrawKey::new(k, i, 0, 2);
            let t = rng.uniform(key(0)).max(1e-3);
            EnvelopePoint {
                t,
                b: vec![t.sqrt() * rng.normal(key(1))],
                y: -3.0 + 6.0 * rng.uniform(key(2)),
                z: vec![-10.0 + 20.0 * rng.uniform(key(3))],
            }
        })
        .collect()
}

/// Monotone in `n`, below `g`, and inside the growth sandwich.
fn criterion2(exec: &Parallel) -> Outcome {
    let pts = random_points(100, SEED);
    let r =
        envelope_sequence_par(exec, &example1(1), EnvelopeKind::InfZ, &[1, 2, 4, 8, 16, 32], &pts, ENV_TOL).unwrap();
    // The checker's monotonicity allowance is 2 tol; the ordering against g
    // and the sandwich use tol.
    let mut by_kind: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &r.violations {
        *by_kind.entry(v.property.as_str()).or_default() += 1;
    }
    check(
        r.passed(),
        format!(
            "{} points x {} indices, violations {:?}, worst order excess {:.2e}",
            pts.len(),
            r.n_list.len(),
            by_kind,
            r.worst_order_excess
        ),
    )
}

/// `(n + lambda)|z1 - z2|^alpha` modulus of the n = 4 approximant.
fn criterion3() -> Outcome {
    let rng = CounterRng::new(SEED ^ 3);
    let pairs: Vec<(EnvelopePoint, EnvelopePoint)> = (0..1000u64)
        .map(|k| {
            let key = |i: u32| DrawKey::new(k, i, 0, 3);
            let t = rng.uniform(key(0)).max(1e-3);
            let b = vec![t.sqrt() * rng.normal(key(1))];
            let y = -3.0 + 6.0 * rng.uniform(key(2));
            let z1 = -10.0 + 20.0 * rng.uniform(key(3));
            // Half of the pairs are close, where the Hölder bound is tight.
            let spread = if k % 2 == 0 { 20.0 } else { 1e-2 };
            let z2 = z1 + spread * (rng.uniform(key(4)) - 0.5);
            (EnvelopePoint { t, b: b.clone(), y, z: vec![z1] }, EnvelopePoint { t, b, y, z: vec![z2] })
        })
        .collect();
    let r = holder_modulus_check(&example1(1), 4, EnvelopeKind::InfZ, &pairs, ENV_TOL).unwrap();
    check(
        r.passed() && r.worst_slack <= TOL,
        format!("{} pairs, {} violations, worst slack {:.2e}", r.pairs_checked, r.violations.len(), r.worst_slack),
    )
}

/// Closed forms: `E[B_1^2] = 1` and `Y_t = e^{-(1-t)} B_t` for `g = -y`.
fn criterion4(exec: &Parallel) -> Outcome {
    let start = Instant::now();
    let p = paths(exec, 50, 100_000, SEED);
    let r = solve(exec, &constant(1, 0.0), "BT2", &p, &SolverConfig::default());
    let ta = start.elapsed();
    let ok_a = (r.y0 - 1.0).abs() <= 3.0 * r.y0_stderr && ta < Duration::from_secs(60);
    let a = format!("(a) y0 = {:.5} +- {:.5}, {:.1}s", r.y0, r.y0_stderr, ta.as_secs_f64());

    let start = Instant::now();
    let p = paths(exec, 100, 100_000, SEED + 1);
    let cfg = SolverConfig { basis: BasisSpec::Polynomial { degree: 3 }, ..Default::default() };
    let r = solve(exec, &neg_y(1), "BT", &p, &cfg);
    let tb = start.elapsed();
    let (mut err2, mut ref2) = (0.0, 0.0);
    for m in 0..p.paths() {
        let exact = (-0.5f64).exp() * p.brownian_at(m, 50).unwrap()[0];
        err2 += (r.y_path(m)[50] - exact).powi(2);
        ref2 += exact * exact;
    }
    let rel = (err2 / ref2).sqrt();
    let ok_b = rel <= 0.02 && tb < Duration::from_secs(60);
    let b = format!("(b) relative L2 error at t = 0.5: {:.3}%, {:.1}s", 100.0 * rel, tb.as_secs_f64());
    check(ok_a && ok_b, format!("{a}; {b}"))
}

/// Common random numbers: `g <= g + 1` gives `Y <= Y'` on every node.
fn criterion5(exec: &Parallel) -> Outcome {
    let p = paths(exec, 50, 20_000, SEED + 2);
    // The local basis keeps the projections monotone, so the discrete
    // ordering carries over pathwise.
    let cfg = SolverConfig { basis: BasisSpec::Local { bins: 32 }, ..Default::default() };
    let g = example3(1, 1.0);
    let a = solve(exec, &g, "absBT", &p, &cfg);
    let b = solve(exec, &g.shifted(1.0), "absBT", &p, &cfg);
    let eps = a.eps_reg + b.eps_reg;
    let mut bad = 0usize;
    for m in 0..p.paths() {
        bad += a.y_path(m).iter().zip(b.y_path(m)).filter(|(ya, yb)| **ya > **yb + eps).count();
    }
    let nodes = p.paths() * (p.grid().n_steps() + 1);

    // y,z-independent generator: the gap is exactly the remaining horizon.
    let h = generator_by_label("expr:cos(b)*t + 1", 1, 1.0).unwrap();
    let c = solve(exec, &h, "BT", &p, &SolverConfig::default());
    let d = solve(exec, &h.shifted(1.0), "BT", &p, &SolverConfig::default());
    let se = paired_stderr(&c, &d).unwrap();
    let gap = d.y0 - c.y0;
    // The paired stderr vanishes up to rounding here; allow a few ulps.
    let ok_gap = (gap - 1.0).abs() <= 3.0 * se + 1e-12;
    check(
        bad == 0 && ok_gap,
        format!(
            "{bad} of {nodes} nodes beyond eps_reg = {eps:.2e}; y,z-independent gap {gap:.12} (paired stderr {se:.1e})"
        ),
    )
}

fn experiment(exec: &Parallel, spec: &ExperimentSpec) -> bsdelab_core::experiments::ExperimentReport {
    let grid = make_grid(spec.horizon, spec.n_steps).unwrap();
    let p = simulate(exec, &grid, spec.dim, spec.paths, spec.seed, spec.path_mode).unwrap();
    run_on(spec, &p, exec).unwrap()
}

fn assertions(rep: &bsdelab_core::experiments::ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        let a = rep.assertion(name).unwrap_or_else(|| panic!("missing assertion {name}"));
        ok &= a.passed;
        parts.push(format!("{name}: {} ({})", if a.passed { "ok" } else { "FAILED" }, a.detail));
    }
    (ok, parts.join("; "))
}

/// Minimal-solution experiment on Example 1.
fn criterion6(exec: &Parallel) -> Outcome {
    let mut spec = ExperimentSpec::new(TheoremId::T1Minimal, "example1", "negabsBT", SEED);
    spec.n_steps = 50;
    spec.paths = 50_000;
    spec.n_list = vec![1, 2, 4, 8, 16];
    let start = Instant::now();
    let rep = experiment(exec, &spec);
    let elapsed = start.elapsed();
    let (ok, detail) = assertions(&rep, &["monotone", "tail", "bounded"]);
    let rows: Vec<String> = rep.tables[0].rows.iter().map(|r| format!("{}: {:.5}", r.n_or_level, r.y0)).collect();
    let detail = format!("{detail}; rows [{}]", rows.join(", "));
    if ok {
        within(elapsed, Duration::from_secs(600), detail)
    } else {
        Err(detail)
    }
}

/// `E[min(B_1^2, n)]` by composite Simpson on `[-12, 12]`, with the kinks at
/// `+-sqrt(n)` as panel boundaries.
fn capped_second_moment(n: f64) -> f64 {
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let f = |x: f64| (x * x).min(n) * phi(x);
    let simpson = |a: f64, b: f64| {
        let k = 20_000;
        let h = (b - a) / k as f64;
        let mut s = f(a) + f(b);
        for i in 1..k {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let r = n.sqrt().min(12.0);
    simpson(-12.0, -r) + simpson(-r, r) + simpson(r, 12.0)
}

/// Levi: `y0(min(B_1^2, n))` against the quadrature oracle.
fn criterion7(exec: &Parallel) -> Outcome {
    let mut spec = ExperimentSpec::new(TheoremId::T3Levi, "zero", "BT2", SEED + 7);
    spec.n_steps = 20;
    spec.paths = 100_000;
    spec.levels = vec![1.0, 2.0, 4.0, 8.0, 16.0];
    let rep = experiment(exec, &spec);
    let (mono_ok, mono) = assertions(&rep, &["monotone"]);
    let table = rep.table("levi").unwrap();
    let mut ok = mono_ok;
    let mut parts = Vec::new();
    for r in &table.rows {
        let exact = capped_second_moment(r.n_or_level);
        let z = (r.y0 - exact) / r.stderr;
        ok &= z.abs() <= 3.0;
        parts.push(format!("{}: {:.4} vs {:.4} ({z:+.2} se)", r.n_or_level, r.y0, exact));
    }
    let last = table.rows.last().unwrap();
    let limit = (last.y0 - 1.0) / last.stderr;
    ok &= limit.abs() <= 3.0;
    check(ok, format!("{mono}; {}; limit gap to 1: {limit:+.2} se", parts.join(", ")))
}

/// Min/max collapse on Example 3 and the power of the broken control.
fn criterion8(exec: &Parallel) -> Outcome {
    let mut spec = ExperimentSpec::new(TheoremId::T10Uniqueness, "example3", "absBT", SEED + 8);
    spec.n_steps = 20;
    spec.paths = 10_000;
    spec.n_list = vec![1, 2, 4, 8, 16, 32];
    spec.control_generator = Some("control_t10".into());
    let rep = experiment(exec, &spec);
    let (ok, detail) = assertions(&rep, &["collapse", "control_power"]);
    check(ok, detail)
}

/// Declared assumptions hold; constructed violators are refuted.
fn criterion9() -> Outcome {
    let start = Instant::now();
    let lat = Lattice::standard(1.0, 1, SEED).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let ex1 = check_claimed(&example1(1), &lat).unwrap();
    let ids: Vec<&str> = ex1.iter().map(|r| r.assumption.as_str()).collect();
    ok &= ids == ["H1", "H2", "H3", "H4"] && ex1.iter().all(|r| r.passed);
    parts.push(format!(
        "example1 {}",
        ex1.iter().map(|r| format!("{}={}", r.assumption, r.passed)).collect::<Vec<_>>().join(",")
    ));
    let g3 = example3(1, 1.0);
    for a in [Assumption::H2, Assumption::H4Prime, Assumption::H4Star] {
        let r = check_assumption(&g3, &lat, a).unwrap();
        ok &= r.passed;
        parts.push(format!("example3 {}={}", r.assumption, r.passed));
    }

    let mut h2 = expr_def("2*y", &["H2"]);
    h2.mu = Some(1.0);
    let mut h4 = expr_def("abs(z)", &["H4"]);
    h4.lambda = Some(1.0);
    h4.alpha = Some(0.5);
    let big = Lattice::standard(1.0, 1, SEED).unwrap().with_z_max(1e6);
    for (def, a, lat) in [(&h2, Assumption::H2, &lat), (&h4, Assumption::H4, &big)] {
        let g = def.build(1.0).unwrap();
        let first = check_assumption(&g, lat, a).unwrap();
        let again = check_assumption(&g, lat, a).unwrap();
        let w = first.witness.clone();
        // The witness must reproduce and genuinely violate the inequality.
        let genuine = match (&w, a) {
            (Some(w), Assumption::H2) => {
                let (y1, y2) = (w.y[0], w.y[1]);
                let (g1, g2) = (g.eval(w.t, &w.b, y1, &w.z[0]), g.eval(w.t, &w.b, y2, &w.z[0]));
                (y1 - y2) * (g1 - g2) > (y1 - y2).powi(2)
            }
            (Some(w), _) => {
                let (y, z) = (w.y[0], w.z[0][0]);
                g.eval(w.t, &w.b, y, &w.z[0]).abs() > y.abs() + z.abs().sqrt()
            }
            (None, _) => false,
        };
        let refuted = !first.passed && first == again && genuine;
        ok &= refuted;
        parts.push(format!(
            "{} {} refuted={refuted} ({} violations, witness lhs {:.3e} > rhs {:.3e})",
            def.expr,
            first.assumption,
            first.violations,
            w.as_ref().map_or(f64::NAN, |w| w.lhs),
            w.as_ref().map_or(f64::NAN, |w| w.rhs)
        ));
    }
    let detail = parts.join("; ");
    if ok {
        within(start.elapsed(), Duration::from_secs(30), detail)
    } else {
        Err(detail)
    }
}

fn bin_run(dir: &Path, workers: &str, args: &[&str]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bsdelab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("BSDELAB_WORKERS", workers)
        .output()
        .map_err(|e| e.to_string())?;
    // Exit code 2 (a property failed) still writes a complete payload.
    let code = out.status.code();
    if !matches!(code, Some(0 | 2)) {
        return Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    let mut files = BTreeMap::new();
    files.insert("exit code".into(), code.unwrap_or_default().to_string().into_bytes());
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        files.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

/// Byte-identical payloads across repeated runs and worker counts.
fn criterion10() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["envelope", "--seed", "11", "--generator", "example1", "--samples", "12", "--modulus-pairs", "8"],
        &["check", "--seed", "12", "--generator", "example3"],
        &["solve", "--seed", "13", "--generator", "example3", "--terminal", "absBT", "--N", "10", "--M", "3000"],
        &[
            "experiment",
            "--seed",
            "14",
            "--theorem",
            "T3_levi",
            "--generator",
            "zero",
            "--terminal",
            "BT2",
            "--N",
            "5",
            "--M",
            "3000",
            "--levels",
            "1,2,4,8",
        ],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (j, workers) in ["1", "3", "3"].iter().enumerate() {
            let dir = tmp.path().join(format!("{k}-{j}"));
            outputs.push(bin_run(&dir, workers, args)?);
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        ok &= same;
        parts.push(format!("{} {} files {}", args[0], outputs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    check(ok, format!("{} (workers 1, 3, 3)", parts.join(", ")))
}

fn main() {
    let exec = Parallel::new(0).expect("thread pool");
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion1)),
        (2, Box::new(|| criterion2(&exec))),
        (3, Box::new(criterion3)),
        (4, Box::new(|| criterion4(&exec))),
        (5, Box::new(|| criterion5(&exec))),
        (6, Box::new(|| criterion6(&exec))),
        (7, Box::new(|| criterion7(&exec))),
        (8, Box::new(|| criterion8(&exec))),
        (9, Box::new(criterion9)),
        (10, Box::new(criterion10)),
    ];
    // `cargo test -- <n>...` runs a subset.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, f) in &criteria {
        if !only.is_empty() && !only.contains(id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id}: PASS [{secs:.1}s] {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id}: FAIL [{secs:.1}s] {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
