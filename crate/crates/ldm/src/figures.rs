//! Figure datasets: one table per panel, one column per caption parameterization.

use rayon::prelude::*;

use ldm_core::analytics::{analytic_autocorrelations, drift_variance_curve, AnalyticsError, ValueOptions, ValueSurface};
use ldm_core::coeffs::{basis_loadings, BasisLoadings};
use ldm_core::{solve_curves, EquilibriumCurves, EquilibriumKind, ModelParams, TimeGrid};

use crate::io::Table;
use crate::parallel::value_surface;

/// `(gamma, sigma_w0)` of the holdings, correlation and drift figures.
pub const LOADING_SETTINGS: [(f64, f64); 4] = [(0.5, 0.1), (0.5, 1.0), (1.0, 0.1), (1.0, 1.0)];
/// Panel id and `sigma_w0` of the two value-function panels.
pub const VALUE_PANELS: [(&str, f64); 2] = [("6A", 1.0), ("6B", 0.1)];
pub const VALUE_GAMMAS: [f64; 2] = [1.0, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub id: &'static str,
    pub x_name: &'static str,
    pub x: Vec<f64>,
    pub columns: Vec<String>,
    /// `values[c][k]` is column `c` at `x[k]`.
    pub values: Vec<Vec<f64>>,
}

impl Panel {
    pub fn table(&self) -> Table {
        let mut t = Table::new(std::iter::once(self.x_name.to_string()).chain(self.columns.iter().cloned()));
        for k in 0..self.x.len() {
            t.push_nums(std::iter::once(self.x[k]).chain(self.values.iter().map(|v| v[k])));
        }
        t
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.values[i].as_slice())
    }

    pub fn file_name(&self) -> String {
        format!("fig{}.csv", self.id)
    }
}

pub fn setting_label(gamma: f64, sigma_w0: f64) -> String {
    format!("gamma_{gamma}_sw0_{sigma_w0}")
}

/// Node indices kept when subsampling by `every`; the last node is always kept.
pub fn retained_nodes(n_nodes: usize, every: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n_nodes).step_by(every.max(1)).collect();
    if v.last() != Some(&(n_nodes - 1)) {
        v.push(n_nodes - 1);
    }
    v
}

/// Every deterministic per-node curve one parameterization contributes to Figs. 1 to 4.
#[derive(Clone, Debug)]
pub struct SettingCurves {
    pub gamma: f64,
    pub sigma_w0: f64,
    pub curves: EquilibriumCurves,
    pub loads: Vec<BasisLoadings>,
    pub rho_reb: Vec<f64>,
    pub rho_trk: Vec<f64>,
    pub rho_price: Vec<f64>,
    pub drift_variance: Vec<f64>,
}

pub fn setting_curves(gamma: f64, sigma_w0: f64, grid: TimeGrid) -> anyhow::Result<SettingCurves> {
    let p = ModelParams::figure_base(gamma, sigma_w0);
    let curves = solve_curves(&p, EquilibriumKind::PriceImpact, grid)?;
    let loads = basis_loadings(&curves, &p)?;
    let rho = analytic_autocorrelations(&curves, &p)?;
    let drift_variance = drift_variance_curve(&curves, &p)?;
    Ok(SettingCurves { gamma, sigma_w0, curves, loads, rho_reb: rho.rho_reb, rho_trk: rho.rho_trk, rho_price: rho.rho_price, drift_variance })
}

type Source = fn(&SettingCurves, usize) -> f64;

/// Panel id and the per-node value it plots. Basis order is `(a_i, aSigma - a_i, w0, w°, R)`.
pub const LOADING_PANELS: [(&str, Source); 14] = [
    ("1A", |s, k| s.loads[k].reb[1]),
    ("1B", |s, k| s.loads[k].trk[0]),
    ("1C", |s, k| s.loads[k].reb[2]),
    ("1D", |s, k| s.loads[k].trk[2]),
    ("1E", |s, k| s.loads[k].reb[0]),
    ("2A", |s, k| s.rho_reb[k]),
    ("2B", |s, k| s.rho_trk[k]),
    ("3A", |s, k| s.loads[k].drift_reb[1]),
    ("3B", |s, k| s.loads[k].drift_trk[0]),
    ("3C", |s, k| s.loads[k].drift_reb[2]),
    ("3D", |s, k| s.loads[k].drift_trk[2]),
    ("3E", |s, k| s.loads[k].drift_reb[0]),
    ("4A", |s, k| s.rho_price[k]),
    ("4B", |s, k| s.drift_variance[k]),
];

/// Solves the four parameterizations in parallel, in [`LOADING_SETTINGS`] order.
pub fn all_setting_curves(grid: TimeGrid) -> anyhow::Result<Vec<SettingCurves>> {
    LOADING_SETTINGS.par_iter().map(|(g, s)| setting_curves(*g, *s, grid)).collect()
}

pub fn loading_panels(settings: &[SettingCurves], every: usize, wanted: impl Fn(&str) -> bool) -> Vec<Panel> {
    let Some(first) = settings.first() else { return Vec::new() };
    let nodes = retained_nodes(first.curves.len(), every);
    let x: Vec<f64> = nodes.iter().map(|k| first.curves.t(*k)).collect();
    LOADING_PANELS
        .iter()
        .filter(|(id, _)| wanted(id))
        .map(|(id, src)| Panel {
            id,
            x_name: "t",
            x: x.clone(),
            columns: settings.iter().map(|s| setting_label(s.gamma, s.sigma_w0)).collect(),
            values: settings.iter().map(|s| nodes.iter().map(|k| src(s, *k)).collect()).collect(),
        })
        .collect()
}

/// Value surfaces of one panel, one per entry of [`VALUE_GAMMAS`].
pub fn value_panel(id: &'static str, sigma_w0: f64, grid: TimeGrid, a_grid: &[f64], opts: &ValueOptions) -> anyhow::Result<(Panel, Vec<ValueSurface>)> {
    let mut surfaces = Vec::new();
    for gamma in VALUE_GAMMAS {
        let p = ModelParams::value_figure(gamma, sigma_w0);
        let c = solve_curves(&p, EquilibriumKind::PriceImpact, grid)?;
        surfaces.push(value_surface(&p, &c, a_grid, opts).map_err(|e: AnalyticsError| anyhow::anyhow!("panel {id}: {e}"))?);
    }
    let panel = Panel {
        id,
        x_name: "a_i",
        x: a_grid.to_vec(),
        columns: VALUE_GAMMAS.iter().map(|g| format!("gamma_{g}")).collect(),
        values: surfaces.iter().map(|s| s.j.clone()).collect(),
    };
    Ok((panel, surfaces))
}

/// gnuplot script drawing every panel of `figure` in one multiplot.
pub fn gnuplot_script(figure: char, panels: &[&Panel]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead\n");
    s.push_str(&format!("set terminal pngcairo size 1200,{}\nset output 'fig{figure}.png'\n", 300 * panels.len().div_ceil(2) + 100));
    s.push_str(&format!("set multiplot layout {},2\n", panels.len().div_ceil(2)));
    for p in panels {
        let last = p.columns.len() + 1;
        s.push_str(&format!("set title '{}'\nset xlabel '{}'\n", p.id, p.x_name));
        s.push_str(&format!("plot for [c=2:{last}] '{}' using 1:c with lines\n", p.file_name()));
    }
    s.push_str("unset multiplot\n");
    s
}

/// One shape or sign fact about the emitted panels.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn find<'a>(panels: &'a [Panel], id: &str) -> Option<&'a Panel> {
    panels.iter().find(|p| p.id == id)
}

fn extreme(p: &Panel, pick: fn(f64, f64) -> f64, init: f64) -> f64 {
    p.values.iter().flatten().copied().fold(init, pick)
}

/// Sign crossing strictly inside the day.
fn crosses_zero(v: &[f64]) -> Option<usize> {
    let last = v.len().saturating_sub(1);
    v.windows(2).position(|w| w[0] * w[1] < 0.0).map(|k| k + 1).filter(|k| *k < last)
}

/// Checks for whichever panels are present: initial own-target loadings in (0.9, 1); negative
/// accommodation loadings; signed trading autocorrelations; rising price autocorrelation and
/// drift variance; the low-`sigma_w0` sign flip on `w0`; value functions peaking at zero.
pub fn figure_checks(panels: &[Panel]) -> Vec<FigureCheck> {
    let mut out = Vec::new();
    let mut push = |name, passed, detail: String| out.push(FigureCheck { name, passed, detail });
    if let Some(p) = find(panels, "1E") {
        let v: Vec<f64> = p.values.iter().map(|c| c[0]).collect();
        push("1E_initial_in_0.9_1", v.iter().all(|x| *x > 0.9 && *x < 1.0), format!("initial loadings {v:?}"));
    }
    for (id, name) in [("1A", "1A_negative"), ("1B", "1B_negative"), ("2B", "2B_negative")] {
        if let Some(p) = find(panels, id) {
            let hi = extreme(p, f64::max, f64::NEG_INFINITY);
            push(name, hi < 0.0, format!("max {hi:e}"));
        }
    }
    if let Some(p) = find(panels, "2A") {
        let lo = extreme(p, f64::min, f64::INFINITY);
        push("2A_positive", lo > 0.0, format!("min {lo:e}"));
    }
    for (id, name) in [("4A", "4A_increasing"), ("4B", "4B_increasing")] {
        if let Some(p) = find(panels, id) {
            let worst = p.values.iter().flat_map(|c| c.windows(2).map(|w| w[1] - w[0])).fold(f64::INFINITY, f64::min);
            push(name, worst > 0.0, format!("smallest step {worst:e}"));
        }
    }
    let blue = setting_label(LOADING_SETTINGS[0].0, LOADING_SETTINGS[0].1);
    for (id, name) in [("1C", "1C_low_sigma_w0_sign_flip"), ("1D", "1D_low_sigma_w0_sign_flip")] {
        if let Some(col) = find(panels, id).and_then(|p| p.column(&blue).map(|c| (p, c))) {
            let (p, c) = col;
            let at = crosses_zero(c);
            push(name, at.is_some(), format!("first crossing at t = {:?}", at.map(|k| p.x[k])));
        }
    }
    for (id, name) in [("6A", "6A_peak_at_zero"), ("6B", "6B_peak_at_zero")] {
        if let Some(p) = find(panels, id) {
            let peaks: Vec<f64> = p
                .values
                .iter()
                .map(|c| {
                    let k = (0..c.len()).fold(0, |b, k| if c[k] > c[b] { k } else { b });
                    p.x[k]
                })
                .collect();
            push(name, peaks.iter().all(|x| *x == 0.0), format!("argmax a_i {peaks:?}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsampling_keeps_ends_and_values() {
        assert_eq!(retained_nodes(11, 3), vec![0, 3, 6, 9, 10]);
        assert_eq!(retained_nodes(11, 5), vec![0, 5, 10]);
        let s = all_setting_curves(TimeGrid::new(40)).unwrap();
        let full = loading_panels(&s, 1, |_| true);
        let thin = loading_panels(&s, 7, |_| true);
        assert_eq!(full.len(), 14);
        for (f, t) in full.iter().zip(&thin) {
            for (c, col) in t.values.iter().enumerate() {
                for (j, k) in retained_nodes(41, 7).into_iter().enumerate() {
                    assert_eq!(col[j].to_bits(), f.values[c][k].to_bits());
                }
            }
        }
    }

    #[test]
    fn panel_tables_and_scripts() {
        let s = all_setting_curves(TimeGrid::new(20)).unwrap();
        let panels = loading_panels(&s, 1, |id| id.starts_with('2'));
        assert_eq!(panels.iter().map(|p| p.id).collect::<Vec<_>>(), ["2A", "2B"]);
        let t = panels[0].table();
        assert_eq!(t.header, ["t", "gamma_0.5_sw0_0.1", "gamma_0.5_sw0_1", "gamma_1_sw0_0.1", "gamma_1_sw0_1"]);
        assert_eq!(t.rows.len(), 21);
        let gp = gnuplot_script('2', &panels.iter().collect::<Vec<_>>());
        assert!(gp.contains("'fig2B.csv' using 1:c"));
        assert!(gp.contains("[c=2:5]"));
    }

    #[test]
    fn checks_cover_present_panels_only() {
        let mk = |id, x: Vec<f64>, v: Vec<f64>| Panel { id, x_name: "t", x, columns: vec![setting_label(0.5, 0.1)], values: vec![v] };
        let panels = [
            mk("1C", vec![0.0, 0.5, 1.0], vec![-1.0, 1.0, 2.0]),
            mk("1D", vec![0.0, 0.5, 1.0], vec![1.0, 2.0, -1.0]),
            mk("4A", vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 2.0]),
        ];
        let c = figure_checks(&panels);
        let get = |n| c.iter().find(|x| x.name == n).unwrap().passed;
        assert_eq!(c.len(), 3);
        assert!(get("1C_low_sigma_w0_sign_flip"));
        // A crossing into the last node is not inside the day.
        assert!(!get("1D_low_sigma_w0_sign_flip"));
        assert!(!get("4A_increasing"));
    }
}
