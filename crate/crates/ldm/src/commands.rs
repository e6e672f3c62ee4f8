//! The six subcommands. Each writes its files and a `manifest.json` into the output directory.
//!
//! Verification failures are data: they clear `all_checks_passed` and set exit status 1.
//! Errors are reserved for invalid configurations and failed computations.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use ldm_core::analytics::{
    cross_correlation_estimate, price_autocorrelation, trading_autocorrelation, AnalyticsError, CorrelationCurve, HolderSeries, ValueOptions,
};
use ldm_core::coeffs::ortho::BASIS_NAMES;
use ldm_core::coeffs::{basis_loadings, drift_coeffs, holdings_coeffs, BasisLoadings, DriftLoadings, HoldingLoadings};
use ldm_core::sim::filter::filter_oracle;
use ldm_core::sim::{draw_path, simulate_path, IdentityMax, Market, PathTrajectory, Retention, SimBatch, SimConfig, SERIES};
use ldm_core::{explicit_cross_checks, solve_curves, EquilibriumCurves, EquilibriumKind};

use crate::config::ScenarioConfig;
use crate::figures::{self, Panel};
use crate::io::{self, OutDir, Table};
use crate::manifest::RunManifest;
use crate::parallel::{simulate_batch, value_surface};

/// Memory ceiling for full-trajectory retention.
pub const RETENTION_BUDGET: usize = 4 << 30;
/// Filter-oracle checkpoints; those off the grid are skipped.
pub const FILTER_CHECKPOINTS: [f64; 3] = [0.25, 0.5, 0.75];
/// Pass threshold on oracle and form-agreement z-scores.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Figures,
    Verify,
    Compare,
    ValueFunction,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Figures => "figures",
            Command::Verify => "verify",
            Command::Compare => "compare",
            Command::ValueFunction => "value-function",
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    /// Human-readable report printed by the binary.
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.manifest.all_checks_passed {
            0
        } else {
            1
        }
    }
}

pub fn run(cmd: Command, sc: &ScenarioConfig) -> Result<Outcome> {
    sc.check()?;
    let mut out = OutDir::create(&sc.out_dir)?;
    let mut m = RunManifest::new(cmd.name(), sc);
    let mut summary = match cmd {
        Command::Solve => solve(sc, &mut m, &mut out)?,
        Command::Simulate => simulate(sc, &mut m, &mut out)?,
        Command::Figures => figures_cmd(sc, &mut m, &mut out)?,
        Command::Verify => verify(sc, &mut m, &mut out)?,
        Command::Compare => compare(sc, &mut m, &mut out)?,
        Command::ValueFunction => value_function(sc, &mut m, &mut out)?,
    };
    for c in m.checks.iter().filter(|c| !c.passed) {
        let _ = writeln!(summary, "FAILED {} {}: {:?} (tolerance {:?})", c.kind, c.name, c.value, c.tolerance);
    }
    m.files = out.files.clone();
    out.write("manifest.json", m.to_json().as_bytes())?;
    Ok(Outcome { manifest: m, summary })
}

fn curves_for(sc: &ScenarioConfig, m: &mut RunManifest, kind: EquilibriumKind) -> Result<EquilibriumCurves> {
    let (p, grid) = (&sc.file.params, sc.file.grid);
    m.stage(format!("solve {kind}"), || solve_curves(p, kind, grid)).with_context(|| format!("solving {kind} curves"))
}

fn market_for(sc: &ScenarioConfig, curves: &EquilibriumCurves) -> Result<Market> {
    let p = &sc.file.params;
    let mk = Market::new(p, Some(curves))?;
    Ok(match &sc.perturb {
        Some((name, delta)) => {
            let table = holdings_coeffs(curves, p)?.perturbed(name, *delta).context("unknown holdings loading")?;
            mk.with_holdings(&table)?
        }
        None => mk,
    })
}

fn invariant_check(m: &mut RunManifest, kind: EquilibriumKind, c: &EquilibriumCurves, sc: &ScenarioConfig) -> Vec<String> {
    let bad = c.invariant_violations(&sc.file.params, 1e-9);
    m.check(kind.slug(), "curve_invariants", bad.len() as f64, Some(0.0), bad.is_empty());
    bad
}

fn solve(sc: &ScenarioConfig, m: &mut RunManifest, out: &mut OutDir) -> Result<String> {
    let p = &sc.file.params;
    let mut s = String::new();
    for kind in sc.kinds() {
        let c = curves_for(sc, m, kind)?;
        let slug = kind.slug();
        out.write_table(&format!("curves_{slug}.csv"), &io::curves_table(&c))?;
        out.write_table(&format!("holdings_{slug}.csv"), &io::holdings_table(&c, &holdings_coeffs(&c, p)?))?;
        out.write_table(&format!("drift_{slug}.csv"), &io::drift_table(&c, &drift_coeffs(&c, p)?))?;
        let bad = invariant_check(m, kind, &c, sc);
        let x = explicit_cross_checks(&c, p);
        m.report(
            slug,
            json!({
                "invariant_violations": bad.iter().take(10).collect::<Vec<_>>(),
                "explicit_residual_B": x.b,
                "explicit_residual_Sigma": x.sigma,
                "explicit_residual_A": x.a,
                "B_at_1": c.b[c.len() - 1],
            }),
        );
        let _ = writeln!(s, "{slug}: {} nodes, {} invariant violations, explicit-form residual {:e}", c.len(), bad.len(), x.max());
    }
    Ok(s)
}

/// Accumulated strides: each requested bandwidth, its half, and 1 for the cross-correlation.
fn accumulated_strides(requested: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = requested.iter().flat_map(|s| [*s, s / 2]).chain([1]).filter(|s| *s >= 1).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn sim_config(sc: &ScenarioConfig) -> SimConfig {
    let mut cfg = SimConfig::new(sc.n_paths, sc.seed);
    cfg.mode = sc.mode;
    cfg.strides = accumulated_strides(&sc.strides);
    if sc.full_retention {
        cfg.retention = Retention::Full { budget_bytes: RETENTION_BUDGET };
    }
    cfg
}

fn moments_table(b: &SimBatch) -> Table {
    let header = std::iter::once("t".to_string()).chain(SERIES.iter().flat_map(|s| [format!("{s}_mean"), format!("{s}_var")]));
    let mut t = Table::new(header);
    for k in 0..b.curves.len() {
        let row = (0..SERIES.len()).flat_map(|s| [b.summary.mean(s, k).0, b.summary.variance(s, k).0]);
        t.push_nums(std::iter::once(b.curves.t(k)).chain(row));
    }
    t
}

fn identity_checks(m: &mut RunManifest, kind: EquilibriumKind, b: &SimBatch) {
    for e in b.report().entries {
        m.check(kind.slug(), e.name, e.value, e.tolerance, e.passed());
    }
}

fn simulate(sc: &ScenarioConfig, m: &mut RunManifest, out: &mut OutDir) -> Result<String> {
    let mut s = String::new();
    for kind in sc.kinds() {
        let slug = kind.slug();
        let c = curves_for(sc, m, kind)?;
        let mk = market_for(sc, &c)?;
        let cfg = sim_config(sc);
        let b = m.stage(format!("simulate {kind}"), || simulate_batch(&mk, &cfg))?;
        identity_checks(m, kind, &b);
        out.write_table(&format!("moments_{slug}.csv"), &moments_table(&b))?;
        let mut skipped = Vec::new();
        let mut emit = |name: String, r: Result<CorrelationCurve, AnalyticsError>, out: &mut OutDir| -> Result<()> {
            match r {
                Ok(curve) => {
                    out.write_table(&name, &io::correlation_table(&curve))?;
                }
                Err(e) => skipped.push(format!("{name}: {e}")),
            }
            Ok(())
        };
        for &st in &sc.strides {
            emit(format!("autocorr_reb_{slug}_s{st}.csv"), trading_autocorrelation(&b, HolderSeries::Rebalancer, st), out)?;
            emit(format!("autocorr_trk_{slug}_s{st}.csv"), trading_autocorrelation(&b, HolderSeries::Tracker, st), out)?;
            emit(format!("autocorr_price_{slug}_s{st}.csv"), price_autocorrelation(&b, st), out)?;
        }
        emit(format!("crosscorr_{slug}_s1.csv"), cross_correlation_estimate(&b, 1), out)?;
        if let Some(paths) = &b.paths {
            for name in &sc.series {
                let t = io::series_table(&b.curves, paths, name).context("unknown series")?;
                out.write_table(&format!("series_{name}_{slug}.csv"), &t)?;
            }
        }
        m.report(slug, json!({ "n_paths": b.n_paths, "correlations_skipped": skipped }));
        let _ = writeln!(s, "{slug}: {} paths, identities {}", b.n_paths, if b.report().all_passed() { "pass" } else { "FAIL" });
    }
    Ok(s)
}

fn verify(sc: &ScenarioConfig, m: &mut RunManifest, _out: &mut OutDir) -> Result<String> {
    let p = &sc.file.params;
    let mut s = String::new();
    for kind in sc.kinds() {
        let slug = kind.slug();
        let c = curves_for(sc, m, kind)?;
        invariant_check(m, kind, &c, sc);
        let mk = market_for(sc, &c)?;
        let mut cfg = sim_config(sc);
        cfg.retention = Retention::Summary;
        let b = m.stage(format!("simulate {kind}"), || simulate_batch(&mk, &cfg))?;
        identity_checks(m, kind, &b);
        let ts: Vec<f64> = FILTER_CHECKPOINTS.into_iter().filter(|t| c.grid.node_of(*t).is_some()).collect();
        let oracle = m.stage(format!("filter oracle {kind}"), || filter_oracle(p, &c, &ts, sc.oracle_paths, sc.seed, f64::INFINITY))?;
        for cp in &oracle.checkpoints {
            m.check(slug, format!("filter_oracle_t{}", cp.t), cp.worst_z(), Some(Z_LIMIT), cp.within(Z_LIMIT));
        }
        if p.sigma_w0 == 0.0 {
            let gap = static_learning_gap(&mk, sc);
            m.check(slug, "static_learning", gap, Some(STATIC_TOL), gap <= STATIC_TOL);
        }
        let failed = m.checks.iter().filter(|x| x.kind == slug && !x.passed).count();
        let _ = writeln!(s, "{slug}: {} checks, {failed} failed", m.checks.iter().filter(|x| x.kind == slug).count());
    }
    Ok(s)
}

/// Paths replayed for the static-learning check.
const STATIC_PATHS: usize = 64;
const STATIC_TOL: f64 = 1e-12;

/// Largest `|q_{i,t} - q_{i,0}|`. With `sigma_w0 = 0` the opening price reveals `aS`, so it is 0.
fn static_learning_gap(mk: &Market, sc: &ScenarioConfig) -> f64 {
    let n = mk.n_steps();
    let mut worst = 0.0f64;
    let mut tr = PathTrajectory::default();
    for id in 0..sc.n_paths.min(STATIC_PATHS) as u64 {
        let d = draw_path(&mk.params, n, sc.seed, id);
        simulate_path(mk, &d, sc.mode, &mut tr, &mut IdentityMax::default());
        let q0 = &tr.q[..tr.m];
        for row in tr.q.chunks(tr.m) {
            worst = row.iter().zip(q0).fold(worst, |w, (q, q0)| w.max((q - q0).abs()));
        }
    }
    worst
}

/// Every loading compared across equilibria, by name, at one node.
fn named_loadings(h: &HoldingLoadings, d: &DriftLoadings, l: &BasisLoadings) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = HoldingLoadings::NAMES.iter().map(|n| n.to_string()).zip(h.values()).collect();
    v.extend(DriftLoadings::NAMES.iter().map(|n| n.to_string()).zip(d.values()));
    for (group, vals) in [("reb", &l.reb), ("trk", &l.trk), ("drift_reb", &l.drift_reb), ("drift_trk", &l.drift_trk)] {
        v.extend(BASIS_NAMES.iter().map(|b| format!("{group}_basis_{b}")).zip(vals.iter().copied()));
    }
    v
}

/// Per-loading comparison of the two equilibria over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadingComparison {
    pub name: String,
    /// Orthogonal-basis loading, as plotted in the holdings and drift figures.
    pub figure: bool,
    pub max_abs_diff: f64,
    /// `max_abs_diff` over the larger sup-norm of the two curves.
    pub max_rel_diff: f64,
    pub sign_disagreements: usize,
    pub first_disagreement_t: Option<f64>,
}

/// Sign class with values at or below `tiny` treated as zero.
fn sign_class(x: f64, tiny: f64) -> i8 {
    if x.abs() <= tiny {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

pub fn compare_equilibria(p: &ldm_core::ModelParams, grid: ldm_core::TimeGrid) -> Result<(Vec<LoadingComparison>, f64)> {
    let mut per_kind = Vec::new();
    let mut bs = Vec::new();
    for kind in EquilibriumKind::ALL {
        let c = solve_curves(p, kind, grid).with_context(|| format!("solving {kind} curves"))?;
        let (h, d, l) = (holdings_coeffs(&c, p)?, drift_coeffs(&c, p)?, basis_loadings(&c, p)?);
        let rows: Vec<Vec<(String, f64)>> = (0..c.len()).map(|k| named_loadings(&h.nodes[k], &d.nodes[k], &l[k])).collect();
        per_kind.push(rows);
        bs.push(c);
    }
    let (pi, nash) = (&per_kind[0], &per_kind[1]);
    let n_load = pi[0].len();
    let mut out = Vec::with_capacity(n_load);
    for j in 0..n_load {
        let a: Vec<f64> = pi.iter().map(|r| r[j].1).collect();
        let b: Vec<f64> = nash.iter().map(|r| r[j].1).collect();
        let sup = a.iter().chain(&b).fold(0.0f64, |x, y| x.max(y.abs()));
        let tiny = 1e-12 * sup.max(1.0);
        let max_abs_diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let bad: Vec<usize> = (0..a.len()).filter(|k| sign_class(a[*k], tiny) != sign_class(b[*k], tiny)).collect();
        out.push(LoadingComparison {
            name: pi[0][j].0.clone(),
            figure: pi[0][j].0.contains("_basis_"),
            max_abs_diff,
            max_rel_diff: if sup > 0.0 { max_abs_diff / sup } else { 0.0 },
            sign_disagreements: bad.len(),
            first_disagreement_t: bad.first().map(|k| bs[0].t(*k)),
        });
    }
    let b_gap = bs[0].b.iter().zip(&bs[1].b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok((out, b_gap))
}

fn compare(sc: &ScenarioConfig, m: &mut RunManifest, out: &mut OutDir) -> Result<String> {
    let p = &sc.file.params;
    for kind in EquilibriumKind::ALL {
        p.validate(kind).map_err(|e| anyhow::anyhow!("compare needs both kinds; {kind}: {e}"))?;
    }
    let (rows, b_gap) = m.stage("compare", || compare_equilibria(p, sc.file.grid))?;
    let mut t = Table::new(["loading", "group", "max_abs_diff", "max_rel_diff", "sign_disagreements", "first_disagreement_t"]);
    for r in &rows {
        t.push(vec![
            r.name.clone(),
            if r.figure { "figure" } else { "state" }.to_string(),
            io::num(r.max_abs_diff),
            io::num(r.max_rel_diff),
            r.sign_disagreements.to_string(),
            r.first_disagreement_t.map(io::num).unwrap_or_default(),
        ]);
    }
    out.write_table("compare.csv", &t)?;
    let agree = |figure: bool| rows.iter().filter(|r| r.figure == figure).all(|r| r.sign_disagreements == 0);
    let (figure_identical, state_identical) = (agree(true), agree(false));
    let worst = rows.iter().max_by(|a, b| a.max_rel_diff.total_cmp(&b.max_rel_diff)).expect("loadings");
    let mut s = String::new();
    let _ = writeln!(s, "figure loadings: sign patterns identical at every node: {figure_identical}");
    let _ = writeln!(s, "state coefficients: sign patterns identical at every node: {state_identical}");
    let _ = writeln!(s, "largest relative difference: {} = {:.3e}", worst.name, worst.max_rel_diff);
    let _ = writeln!(s, "max |B_price-impact - B_nash| = {b_gap:.3e}");
    for r in rows.iter().filter(|r| r.sign_disagreements > 0) {
        let _ = writeln!(s, "  {} disagrees at {} nodes, first at t = {:?}", r.name, r.sign_disagreements, r.first_disagreement_t);
    }
    out.write("compare.txt", s.as_bytes())?;
    let rel: serde_json::Map<String, Value> = rows.iter().map(|r| (r.name.clone(), json!(r.max_rel_diff))).collect();
    m.report("figure_sign_patterns_identical", json!(figure_identical));
    m.report("state_sign_patterns_identical", json!(state_identical));
    m.report("max_rel_diff", Value::Object(rel));
    m.report("max_abs_diff_B", json!(b_gap));
    Ok(s)
}

fn value_function(sc: &ScenarioConfig, m: &mut RunManifest, out: &mut OutDir) -> Result<String> {
    let p = &sc.file.params;
    let mut s = String::new();
    for kind in sc.kinds() {
        let slug = kind.slug();
        let c = curves_for(sc, m, kind)?;
        let opts = ValueOptions { allow_nash: kind == EquilibriumKind::Nash, ..ValueOptions::new(sc.n_paths, sc.seed) };
        let v = m.stage(format!("value function {kind}"), || value_surface(p, &c, &sc.value_grid, &opts)).map_err(|e| anyhow::anyhow!("{kind}: {e}"))?;
        out.write_table(&format!("value_{slug}.csv"), &io::value_table(&v))?;
        let mut t = Table::new(["a_i", "J", "J_se", "J_pathwise", "J_pathwise_se", "J_gaussian", "eta0", "Y0", "qi0"]);
        for k in 0..v.a_grid.len() {
            let e = v.eval_state[k];
            t.push_nums([v.a_grid[k], v.j[k], v.j_se[k], v.j_pathwise[k], v.j_pathwise_se[k], v.j_gaussian[k], e.eta0, e.y0, e.qi0]);
        }
        out.write_table(&format!("value_forms_{slug}.csv"), &t)?;
        let worst_z = v.form_gap_z().into_iter().fold(0.0, f64::max);
        m.check(slug, "drift_vs_pathwise_z", worst_z, Some(Z_LIMIT), worst_z <= Z_LIMIT);
        let fit = v.rc.as_ref().map(|r| json!({ "c0": r.fit.c0, "c1": r.fit.c1, "c2": r.fit.c2, "r_squared": r.fit.r_squared }));
        m.report(slug, json!({ "rc_fit": fit, "n_paths": v.n_paths }));
        match &v.rc {
            Some(r) => {
                let _ = writeln!(s, "{slug}: RC ~ {:.4e} + {:.4e} a + {:.4e} a^2, R^2 = {:.6}", r.fit.c0, r.fit.c1, r.fit.c2, r.fit.r_squared);
            }
            None => {
                let _ = writeln!(s, "{slug}: grid lacks a_i = 0, no RC");
            }
        }
    }
    Ok(s)
}

fn figures_cmd(sc: &ScenarioConfig, m: &mut RunManifest, out: &mut OutDir) -> Result<String> {
    let mut panels: Vec<Panel> = Vec::new();
    if figures::LOADING_PANELS.iter().any(|(id, _)| sc.wants(id)) {
        let settings = m.stage("solve caption settings", || figures::all_setting_curves(sc.file.grid))?;
        panels.extend(figures::loading_panels(&settings, sc.every, |id| sc.wants(id)));
    }
    let opts = ValueOptions::new(sc.n_paths, sc.seed);
    for (id, sigma_w0) in figures::VALUE_PANELS {
        if sc.wants(id) {
            let (panel, _) = m.stage(format!("value panel {id}"), || figures::value_panel(id, sigma_w0, sc.file.grid, &sc.value_grid, &opts))?;
            panels.push(panel);
        }
    }
    for p in &panels {
        out.write_table(&format!("figures/{}", p.file_name()), &p.table())?;
    }
    for fig in ['1', '2', '3', '4', '6'] {
        let mine: Vec<&Panel> = panels.iter().filter(|p| p.id.starts_with(fig)).collect();
        if !mine.is_empty() {
            out.write(&format!("figures/fig{fig}.gp"), figures::gnuplot_script(fig, &mine).as_bytes())?;
        }
    }
    let mut s = String::new();
    for c in figures::figure_checks(&panels) {
        m.check("figures", c.name, if c.passed { 0.0 } else { 1.0 }, None, c.passed);
        let _ = writeln!(s, "{} {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
    }
    let _ = writeln!(s, "{} panels written", panels.len());
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_include_halves_and_one() {
        assert_eq!(accumulated_strides(&[2, 4]), vec![1, 2, 4]);
        assert_eq!(accumulated_strides(&[6]), vec![1, 3, 6]);
        assert_eq!(accumulated_strides(&[]), vec![1]);
    }

    #[test]
    fn sign_classes() {
        assert_eq!(sign_class(1e-13, 1e-12), 0);
        assert_eq!(sign_class(-2e-12, 1e-12), -1);
        assert_eq!(sign_class(3.0, 1e-12), 1);
    }
}
