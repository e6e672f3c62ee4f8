//! Streaming maxima of identity residuals and the pass/fail report built from them.

use alloc::string::String;
use alloc::vec::Vec;

use super::StepMode;
use crate::model::EquilibriumKind;

/// Running maxima over paths and nodes. Merging takes elementwise maxima.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityMax {
    /// `|sum_k theta_k| / max_k |theta_k|`
    pub clearing_rel: f64,
    pub clearing_abs: f64,
    /// Clearing residual after removing `reb_on_qi` times the decomposition residual.
    pub clearing_net_rel: f64,
    pub drift_matching_rel: f64,
    pub frame_rel: f64,
    pub decomposition_sum: f64,
    pub decomposition_inverse: f64,
    pub y_identity: f64,
    pub initial_price: f64,
    pub wealth_rel: f64,
    pub nash_consistency_rel: f64,
    /// Largest per-path `(1/M) sum_i int theta_i^2 dt`.
    pub square_integral_max: f64,
    pub square_integral_sum: f64,
    pub paths: u64,
}

fn bump(slot: &mut f64, v: f64) {
    // NaN must surface as a failure, so it wins.
    if v.is_nan() || *slot < v {
        *slot = v;
    }
}

impl IdentityMax {
    pub(crate) fn clearing(&mut self, raw: f64, net: f64, big: f64) {
        bump(&mut self.clearing_abs, raw.abs());
        if big > 0.0 {
            bump(&mut self.clearing_rel, raw.abs() / big);
            bump(&mut self.clearing_net_rel, net.abs() / big);
        } else {
            bump(&mut self.clearing_rel, raw.abs());
            bump(&mut self.clearing_net_rel, net.abs());
        }
    }

    pub(crate) fn drift_matching(&mut self, r: f64) {
        bump(&mut self.drift_matching_rel, r);
    }

    pub(crate) fn frame(&mut self, r: f64) {
        bump(&mut self.frame_rel, r);
    }

    pub(crate) fn decomposition_sum(&mut self, d: f64) {
        bump(&mut self.decomposition_sum, d.abs());
    }

    pub(crate) fn decomposition_inverse(&mut self, d: f64) {
        bump(&mut self.decomposition_inverse, d.abs());
    }

    pub(crate) fn y_identity(&mut self, d: f64) {
        bump(&mut self.y_identity, d.abs());
    }

    pub(crate) fn initial_price(&mut self, d: f64) {
        bump(&mut self.initial_price, d.abs());
    }

    pub(crate) fn wealth(&mut self, sum: f64, scale: f64) {
        bump(&mut self.wealth_rel, if scale > 0.0 { sum.abs() / scale } else { sum.abs() });
    }

    pub(crate) fn nash_consistency(&mut self, r: f64) {
        bump(&mut self.nash_consistency_rel, r);
    }

    pub(crate) fn square_integral(&mut self, v: f64) {
        bump(&mut self.square_integral_max, v);
        self.square_integral_sum += v;
        self.paths += 1;
    }

    pub fn merge(&mut self, o: &IdentityMax) {
        bump(&mut self.clearing_rel, o.clearing_rel);
        bump(&mut self.clearing_abs, o.clearing_abs);
        bump(&mut self.clearing_net_rel, o.clearing_net_rel);
        bump(&mut self.drift_matching_rel, o.drift_matching_rel);
        bump(&mut self.frame_rel, o.frame_rel);
        bump(&mut self.decomposition_sum, o.decomposition_sum);
        bump(&mut self.decomposition_inverse, o.decomposition_inverse);
        bump(&mut self.y_identity, o.y_identity);
        bump(&mut self.initial_price, o.initial_price);
        bump(&mut self.wealth_rel, o.wealth_rel);
        bump(&mut self.nash_consistency_rel, o.nash_consistency_rel);
        bump(&mut self.square_integral_max, o.square_integral_max);
        self.square_integral_sum += o.square_integral_sum;
        self.paths += o.paths;
    }
}

/// Pass thresholds. `None` means report only.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityTolerances {
    pub clearing_rel: Option<f64>,
    pub clearing_net_rel: Option<f64>,
    pub drift_matching_rel: Option<f64>,
    pub frame_rel: Option<f64>,
    pub decomposition: Option<f64>,
    pub y_identity: Option<f64>,
    pub initial_price: Option<f64>,
    pub wealth_rel: Option<f64>,
    pub nash_consistency_rel: Option<f64>,
}

impl IdentityTolerances {
    /// Machine-precision identities at 1e-10. Euler decomposition at `2 / n_steps`, which is
    /// 1e-3 at 2000 steps and 2.5e-4 at 8000. Raw clearing and wealth carry the Euler filter
    /// error, so they are report-only in Euler mode.
    pub fn for_batch(mode: StepMode, n_steps: usize, kind: EquilibriumKind) -> Self {
        let euler = mode == StepMode::Euler;
        IdentityTolerances {
            clearing_rel: if euler { None } else { Some(1e-10) },
            clearing_net_rel: Some(1e-10),
            drift_matching_rel: Some(1e-10),
            frame_rel: Some(1e-10),
            decomposition: Some(if euler { 2.0 / n_steps as f64 } else { 1e-9 }),
            y_identity: Some(1e-10),
            initial_price: Some(1e-12),
            wealth_rel: if euler { None } else { Some(1e-10) },
            nash_consistency_rel: if kind == EquilibriumKind::Nash { Some(1e-10) } else { None },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityEntry {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: Option<f64>,
}

impl IdentityEntry {
    pub fn passed(&self) -> bool {
        match self.tolerance {
            Some(t) => self.value <= t,
            None => self.value.is_finite(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    pub entries: Vec<IdentityEntry>,
}

impl IdentityReport {
    pub fn build(m: &IdentityMax, tol: &IdentityTolerances, kind: EquilibriumKind) -> Self {
        let e = |name, value, tolerance| IdentityEntry { name, value, tolerance };
        let mut entries = alloc::vec![
            e("market_clearing", m.clearing_rel, tol.clearing_rel),
            e("market_clearing_net_of_filter_error", m.clearing_net_rel, tol.clearing_net_rel),
            e("drift_matching", m.drift_matching_rel, tol.drift_matching_rel),
            e("frame_equivalence", m.frame_rel, tol.frame_rel),
            e("decomposition_sum", m.decomposition_sum, tol.decomposition),
            e("decomposition_inverse", m.decomposition_inverse, tol.decomposition),
            e("y_identity", m.y_identity, tol.y_identity),
            e("initial_price", m.initial_price, tol.initial_price),
            e("wealth_accounting", m.wealth_rel, tol.wealth_rel),
            e("square_integrability_max", m.square_integral_max, None),
        ];
        if kind == EquilibriumKind::Nash {
            entries.push(e("nash_consistency", m.nash_consistency_rel, tol.nash_consistency_rel));
        }
        IdentityReport { entries }
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(IdentityEntry::passed)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn push(&mut self, name: &'static str, value: f64, tolerance: Option<f64>) {
        self.entries.push(IdentityEntry { name, value, tolerance });
    }

    pub fn failures(&self) -> Vec<String> {
        use core::fmt::Write;
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| !e.passed()) {
            let mut s = String::new();
            let _ = write!(s, "{} = {:e} exceeds {:e}", e.name, e.value, e.tolerance.unwrap_or(f64::NAN));
            out.push(s);
        }
        out
    }
}
