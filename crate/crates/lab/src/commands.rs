//! Subcommand drivers: effective configuration in, report out.

use bsdelab_core::assumptions::{check_assumption, check_claimed, check_implications, CheckReport, Lattice};
use bsdelab_core::convolution::{
    holder_modulus_check, search_radius_yz, search_radius_z, EnvelopePoint, ModulusReport,
};
use bsdelab_core::experiments::run_on;
use bsdelab_core::generators::{generator_by_label, terminal_by_label, Assumption, GeneratorSpec};
use bsdelab_core::rng::{CounterRng, DrawKey};
use bsdelab_core::solver::{solve_with, SolveResult};
use bsdelab_core::stochastic::make_grid;
use bsdelab_core::Error;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{CheckParams, EnvelopeParams, Params, RunConfig, SolveParams};
use crate::error::{LabError, Result};
use crate::exec::{envelope_sequence_par, simulate, Parallel};
use crate::pathio;
use crate::report::{Cell, Report, Table};

/// Draw tags keeping the sampling streams of this module apart.
const TAG_POINTS: u16 = 0x4c01;
const TAG_PAIRS: u16 = 0x4c02;

/// A finished run: the payload plus a human-readable summary for stdout.
pub struct RunOutput {
    pub report: Report,
    pub summary: Vec<String>,
}

pub fn run(rc: &RunConfig, exec: &Parallel) -> Result<RunOutput> {
    match &rc.params {
        Params::Envelope(p) => envelope(rc, p, exec),
        Params::Check(p) => check(rc, p),
        Params::Solve(p) => solve(rc, p, exec),
        Params::Experiment(_) => experiment(rc, exec),
    }
}

/// Resolves a generator label, preferring definitions from the config file.
pub fn resolve_generator(rc: &RunConfig, label: &str, dim: usize, horizon: f64) -> Result<GeneratorSpec> {
    match rc.generators.get(label) {
        Some(def) => {
            if def.dim != dim {
                return Err(LabError::Usage(format!(
                    "generator '{label}' is defined for d={}, run uses d={dim}",
                    def.dim
                )));
            }
            Ok(def.build(horizon)?.with_label(label))
        }
        None => Ok(generator_by_label(label, dim, horizon)?),
    }
}

fn sample_points(p: &EnvelopeParams, seed: u64) -> Vec<EnvelopePoint> {
    let rng = CounterRng::new(seed);
    (0..p.samples as u64)
        .map(|k| {
            let key = |index: u32, c: usize| DrawKey::new(k, index, c as u16, TAG_POINTS);
            let t = p.horizon * rng.uniform_pair(key(0, 0)).0;
            let b = (0..p.dim).map(|c| t.sqrt() * rng.normal(key(1, c))).collect();
            let y = p.y_range * (2.0 * rng.uniform(key(2, 0)) - 1.0);
            let z = (0..p.dim).map(|c| p.z_range * (2.0 * rng.uniform(key(3, c)) - 1.0)).collect();
            EnvelopePoint { t, b, y, z }
        })
        .collect()
}

/// Pairs sharing `(t, b)` (and `y` for the z-kinds).
fn sample_pairs(p: &EnvelopeParams, seed: u64) -> Vec<(EnvelopePoint, EnvelopePoint)> {
    let rng = CounterRng::new(seed);
    (0..p.modulus_pairs as u64)
        .map(|k| {
            let key = |index: u32, c: usize| DrawKey::new(k, index, c as u16, TAG_PAIRS);
            let t = p.horizon * rng.uniform_pair(key(0, 0)).0;
            let b: Vec<f64> = (0..p.dim).map(|c| t.sqrt() * rng.normal(key(1, c))).collect();
            let y1 = p.y_range * (2.0 * rng.uniform(key(2, 0)) - 1.0);
            let y2 = if p.kind.is_joint() { p.y_range * (2.0 * rng.uniform(key(4, 0)) - 1.0) } else { y1 };
            let z1 = (0..p.dim).map(|c| p.z_range * (2.0 * rng.uniform(key(3, c)) - 1.0)).collect();
            let z2 = (0..p.dim).map(|c| p.z_range * (2.0 * rng.uniform(key(5, c)) - 1.0)).collect();
            (EnvelopePoint { t, b: b.clone(), y: y1, z: z1 }, EnvelopePoint { t, b, y: y2, z: z2 })
        })
        .collect()
}

fn envelope(rc: &RunConfig, p: &EnvelopeParams, exec: &Parallel) -> Result<RunOutput> {
    let g = resolve_generator(rc, &p.generator, p.dim, p.horizon)?;
    let points = if p.points.is_empty() { sample_points(p, rc.seed) } else { p.points.clone() };
    let seq = envelope_sequence_par(exec, &g, p.kind, &p.n_list, &points, p.tol)?;
    let mut report = Report::new(rc);
    let mut table = Table::new("envelope", &["point", "n", "value", "gap", "radius"]);
    for (k, pt) in points.iter().enumerate() {
        for (j, &n) in p.n_list.iter().enumerate() {
            let radius = if p.kind.is_joint() {
                search_radius_yz(&g, n, pt.t, &pt.b, pt.y, &pt.z, p.tol)?.1
            } else {
                search_radius_z(&g, n, pt.t, &pt.b, pt.y, &pt.z, p.tol)?
            };
            table.push(vec![
                k.into(),
                n.into(),
                seq.values[k][j].into(),
                seq.certified_gaps[k][j].into(),
                radius.into(),
            ]);
        }
    }
    let mut summary = vec![format!("{} {} n={:?}: {} points", g.label, p.kind.id(), p.n_list, points.len())];
    report.verdict(
        "sequence",
        seq.passed(),
        format!(
            "{} violations (monotone in n within 2 tol, ordering against g, growth sandwich); worst order excess {:.3e}",
            seq.violations.len(),
            seq.worst_order_excess
        ),
    );
    let modulus = if p.modulus_pairs > 0 {
        let pairs = sample_pairs(p, rc.seed);
        let m = modulus_par(exec, &g, p, &pairs)?;
        report.verdict(
            "modulus",
            m.passed(),
            format!(
                "{} of {} pairs violate the modulus; worst slack {:.3e}",
                m.violations.len(),
                m.pairs_checked,
                m.worst_slack
            ),
        );
        Some(m)
    } else {
        None
    };
    for v in &report.verdicts {
        summary.push(format!("{:<10} {}  {}", v.name, pass_word(v.passed), v.detail));
    }
    report.tables.push(table);
    report.results.push(json!({
        "generator": g.label,
        "kind": p.kind,
        "points": points,
        "sequence": seq,
        "modulus": modulus,
    }));
    Ok(RunOutput { report, summary })
}

fn modulus_par(
    exec: &Parallel,
    g: &GeneratorSpec,
    p: &EnvelopeParams,
    pairs: &[(EnvelopePoint, EnvelopePoint)],
) -> Result<ModulusReport> {
    let parts: Vec<ModulusReport> = exec.install(|| {
        pairs
            .par_iter()
            .map(|pair| holder_modulus_check(g, p.modulus_n, p.kind, core::slice::from_ref(pair), p.tol))
            .collect::<bsdelab_core::Result<Vec<_>>>()
    })?;
    let mut out = ModulusReport {
        kind: p.kind,
        n: p.modulus_n,
        pairs_checked: pairs.len(),
        violations: Vec::new(),
        worst_slack: f64::NEG_INFINITY,
        witness: None,
    };
    for (k, part) in parts.into_iter().enumerate() {
        if part.worst_slack > out.worst_slack {
            out.worst_slack = part.worst_slack;
            out.witness = Some(k);
        }
        out.violations.extend(part.violations.into_iter().map(|mut v| {
            v.point = k;
            v
        }));
    }
    Ok(out)
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn check(rc: &RunConfig, p: &CheckParams) -> Result<RunOutput> {
    let g = resolve_generator(rc, &p.generator, p.dim, p.horizon)?;
    let mut params = g.params.clone();
    for (slot, v) in [
        (&mut params.mu, p.mu),
        (&mut params.lambda, p.lambda),
        (&mut params.alpha, p.alpha),
        (&mut params.c, p.c),
        (&mut params.gamma, p.gamma),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    params.validate()?;
    let g = g.with_params(params);
    let mut lat = Lattice::standard(p.horizon, p.dim, rc.seed)?;
    if let Some(z) = p.z_max {
        lat = lat.with_z_max(z);
    }
    if let Some(k) = p.pairs {
        lat = lat.with_pairs(k);
    }
    let mut reports: Vec<CheckReport> = if p.assumptions.is_empty() {
        check_claimed(&g, &lat)?
    } else {
        p.assumptions
            .iter()
            .map(|s| Assumption::parse(s).and_then(|a| check_assumption(&g, &lat, a)))
            .collect::<bsdelab_core::Result<_>>()?
    };
    if p.implications {
        reports.extend(check_implications(&g, &lat)?);
    }
    if reports.is_empty() {
        return Err(LabError::Usage(format!("generator '{}' claims no assumptions; pass --assumptions", g.label)));
    }
    let mut report = Report::new(rc);
    let mut table = Table::new("checks", &["assumption", "passed", "checked", "violations", "worst_slack"]);
    let mut summary = vec![format!("{}: {} checks on the sampling lattice (seed {})", g.label, reports.len(), rc.seed)];
    summary.push(format!(
        "{:<28} {:>6} {:>9} {:>10} {:>12}",
        "assumption", "result", "checked", "violations", "worst_slack"
    ));
    for r in &reports {
        let detail = if r.passed {
            format!("no violation found on {} lattice points", r.checked)
        } else {
            let w = r.witness.as_ref().map(|w| format!("; witness t={} b={:?} y={:?} z={:?}", w.t, w.b, w.y, w.z));
            format!("{} violations on {} points{}", r.violations, r.checked, w.unwrap_or_default())
        };
        report.verdict(r.assumption.clone(), r.passed, detail);
        table.push(vec![
            r.assumption.as_str().into(),
            r.passed.into(),
            r.checked.into(),
            r.violations.into(),
            r.worst_slack.into(),
        ]);
        summary.push(format!(
            "{:<28} {:>6} {:>9} {:>10} {:>12.3e}",
            r.assumption,
            pass_word(r.passed),
            r.checked,
            r.violations,
            r.worst_slack
        ));
    }
    report.tables.push(table);
    report.results.extend(reports.iter().map(|r| serde_json::to_value(r).expect("check reports serialize")));
    Ok(RunOutput { report, summary })
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn solve(rc: &RunConfig, p: &SolveParams, exec: &Parallel) -> Result<RunOutput> {
    if p.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(LabError::Usage("quantiles must lie in [0, 1]".into()));
    }
    let g = resolve_generator(rc, &p.generator, p.dim, p.horizon)?;
    let xi = terminal_by_label(&p.terminal, p.dim, p.horizon)?;
    let truncated = p.solver.truncation.is_some_and(|t| t.level.is_finite());
    if !xi.square_integrable && !truncated {
        return Err(Error::Config(format!(
            "terminal '{}' is not square integrable; set a truncation level (--truncation)",
            xi.label
        ))
        .into());
    }
    let grid = make_grid(p.horizon, p.n_steps)?;
    let paths = simulate(exec, &grid, p.dim, p.paths, rc.seed, p.path_mode)?;
    if let Some(dump) = &rc.output.dump_paths {
        pathio::save(&paths, dump)?;
    }
    let res = solve_with(&xi, &g, &paths, &p.solver, exec)?;
    let mut report = Report::new(rc);
    report.tables.push(path_table(&res, grid.nodes(), &p.quantiles));
    report.results.push(json!({
        "generator": g.label,
        "terminal": xi.label,
        "y0": res.y0,
        "y0_stderr": res.y0_stderr,
        "eps_reg": res.eps_reg,
        "diagnostics": res.diagnostics,
    }));
    let summary = vec![format!(
        "{} / {}: y0 = {:.6} +- {:.6} (eps_reg {:.3e}, N={}, M={})",
        g.label, xi.label, res.y0, res.y0_stderr, res.eps_reg, p.n_steps, p.paths
    )];
    Ok(RunOutput { report, summary })
}

fn path_table(res: &SolveResult, nodes: &[f64], quantiles: &[f64]) -> Table {
    let names: Vec<String> = quantiles.iter().map(|q| format!("q{q}")).collect();
    let mut cols = vec!["t", "mean_y"];
    cols.extend(names.iter().map(String::as_str));
    let mut table = Table::new("path", &cols);
    let mut col = vec![0.0; res.paths()];
    for (i, &t) in nodes.iter().enumerate() {
        for (m, c) in col.iter_mut().enumerate() {
            *c = res.y_path(m)[i];
        }
        col.sort_by(f64::total_cmp);
        let mut row: Vec<Cell> = vec![t.into(), res.mean_at(i).into()];
        row.extend(quantiles.iter().map(|&q| Cell::Num(quantile(&col, q))));
        table.push(row);
    }
    table
}

fn experiment(rc: &RunConfig, exec: &Parallel) -> Result<RunOutput> {
    let Params::Experiment(spec) = &rc.params else { unreachable!("dispatched on params") };
    let grid = make_grid(spec.horizon, spec.n_steps)?;
    let paths = simulate(exec, &grid, spec.dim, spec.paths, spec.seed, spec.path_mode)?;
    let rep = run_on(spec, &paths, exec)?;
    let mut report = Report::new(rc);
    let mut summary =
        vec![format!("{} on {} / {} (seed {})", spec.theorem.id(), spec.generator, spec.terminal, spec.seed)];
    for a in &rep.assertions {
        report.verdict(a.name.clone(), a.passed, a.detail.clone());
        summary.push(format!("{:<24} {}  {}", a.name, pass_word(a.passed), a.detail));
    }
    for t in &rep.tables {
        report.tables.push(Table::convergence(t));
    }
    summary.extend(rep.notes.iter().map(|n| format!("note: {n}")));
    report.results.push(serde_json::to_value(&rep)?);
    Ok(RunOutput { report, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn sampled_points_are_reproducible_and_in_range() {
        let p = EnvelopeParams {
            generator: "example1".into(),
            kind: bsdelab_core::convolution::EnvelopeKind::InfZ,
            n_list: vec![1],
            dim: 2,
            horizon: 2.0,
            tol: 1e-6,
            points: Vec::new(),
            samples: 50,
            y_range: 3.0,
            z_range: 5.0,
            modulus_pairs: 10,
            modulus_n: 4,
        };
        let a = sample_points(&p, 1);
        assert_eq!(a, sample_points(&p, 1));
        assert_ne!(a, sample_points(&p, 2));
        assert!(a.iter().all(|q| q.t > 0.0 && q.t <= 2.0 && q.y.abs() <= 3.0 && q.z.iter().all(|z| z.abs() <= 5.0)));
        for (x, y) in sample_pairs(&p, 1) {
            assert_eq!((x.t, &x.b, x.y), (y.t, &y.b, y.y));
        }
    }
}
