//! Deterministic equilibrium curves `B, B', A, Sigma, F1, F2` on a uniform grid.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::model::{EquilibriumKind, ModelParams, ParamErrors, TimeGrid};
use crate::quad::cumulative_simpson;

#[derive(Clone, Debug, PartialEq)]
pub enum SolveError {
    Invalid(ParamErrors),
    /// `sigma_w0^2 + (M-1) B0^2 sigma_a^2 = 0` leaves `Sigma(0)` as 0/0.
    DegenerateFilter,
    NashDenominatorVanishes {
        t: f64,
        value: f64,
    },
    /// The state left the finite range.
    Blowup {
        t: f64,
    },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Invalid(e) => write!(f, "invalid parameters: {e}"),
            SolveError::DegenerateFilter => {
                write!(f, "degenerate filter: sigma_w0 = 0 together with (M-1) B0^2 = 0")
            }
            SolveError::NashDenominatorVanishes { t, value } => {
                write!(f, "Nash B' denominator vanishes at t = {t} (value {value:e})")
            }
            SolveError::Blowup { t } => write!(f, "curves became non-finite at t = {t}"),
        }
    }
}

impl core::error::Error for SolveError {}

impl From<ParamErrors> for SolveError {
    fn from(e: ParamErrors) -> Self {
        SolveError::Invalid(e)
    }
}

/// `B'` as a function of the current `(t, A, B)`.
pub fn mixing_slope(kind: EquilibriumKind, p: &ModelParams, kappa: f64, a: f64, b: f64) -> Result<f64, f64> {
    match kind {
        EquilibriumKind::PriceImpact => {
            let mb = p.m_bar();
            Ok(2.0 * kappa * (mb * b + 1.0) / (p.gamma * (a + mb + 1.0)))
        }
        EquilibriumKind::Nash => {
            let (num, den, scale) = nash_slope_parts(p, kappa, a, b);
            if !(den.abs() > 1e-12 * scale) {
                return Err(den);
            }
            Ok(num / den)
        }
    }
}

/// Numerator, denominator and the denominator's absolute term scale.
fn nash_slope_parts(p: &ModelParams, k: f64, a_fn: f64, b: f64) -> (f64, f64, f64) {
    let m = p.m();
    let mb = p.m_bar();
    let al = p.alpha;
    let n = m + mb;
    let num = 2.0 * k * (mb * b * (n - 1.0) * (al * n - 2.0 * (n - 1.0) * k) + (n - 2.0) * (al * (n + 1.0) - 2.0 * n * k));
    let t1 = a_fn * (n - 2.0) * (al * (n + 1.0) - 2.0 * n * k);
    let t2 = al * ((m * m + m - 1.0) * mb + m * m + 2.0 * m * mb * mb - m + mb * mb * mb - 2.0);
    let t3 = -2.0 * ((m * m - 1.0) * mb + (2.0 * m - 1.0) * mb * mb + (m - 2.0) * m + mb * mb * mb) * k;
    let den = p.gamma * (t1 + t2 + t3);
    let scale = p.gamma * (t1.abs() + t2.abs() + t3.abs());
    (num, den, scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumCurves {
    pub grid: TimeGrid,
    pub kind: EquilibriumKind,
    pub b: Vec<f64>,
    /// Right-hand side evaluated at each node, not a difference quotient.
    pub b_prime: Vec<f64>,
    pub a: Vec<f64>,
    pub sigma_filt: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

/// Initial `(A(0), Sigma(0))`, guarding the 0/0 case.
pub fn initial_filter(p: &ModelParams) -> Result<(f64, f64), SolveError> {
    let d0 = p.d0();
    if !(d0 > 0.0) {
        return Err(SolveError::DegenerateFilter);
    }
    let s2 = p.sigma_a * p.sigma_a;
    let a0 = -(p.m() - 1.0) * p.b0 * p.b0 * s2 / d0;
    let sig0 = (p.m() - 1.0) * s2 * p.sigma_w0 * p.sigma_w0 / d0;
    Ok((a0, sig0))
}

/// Solves the coupled system for `kind` by classic RK4.
pub fn solve_curves(p: &ModelParams, kind: EquilibriumKind, grid: TimeGrid) -> Result<EquilibriumCurves, SolveError> {
    p.validate(kind)?;
    let (a0, s0) = initial_filter(p)?;
    integrate(kind, grid, [p.b0, a0, s0, 1.0, 0.0], |t, a, b| {
        let k = p.kappa.at(t);
        match mixing_slope(kind, p, k, a, b) {
            Ok(d) => Ok((d, None)),
            Err(value) => Err(SolveError::NashDenominatorVanishes { t, value }),
        }
    })
}

/// Grid doublings tried by [`solve_resolved`].
pub const MAX_DOUBLINGS: u32 = 8;

/// Largest gap between two solutions at shared nodes, per curve relative to its sup-norm on `fine`.
/// `fine` must have exactly twice the steps of `coarse`.
pub fn refinement_gap(coarse: &EquilibriumCurves, fine: &EquilibriumCurves) -> f64 {
    debug_assert_eq!(2 * coarse.grid.n_steps, fine.grid.n_steps);
    let gap = |c: &[f64], f: &[f64]| {
        let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = c.iter().enumerate().fold(0.0f64, |m, (k, v)| m.max((v - f[2 * k]).abs()));
        if sup > 0.0 {
            d / sup
        } else {
            d
        }
    };
    [(&coarse.b, &fine.b), (&coarse.a, &fine.a), (&coarse.sigma_filt, &fine.sigma_filt), (&coarse.f1, &fine.f1), (&coarse.f2, &fine.f2)]
        .into_iter()
        .map(|(c, f)| gap(c, f))
        .fold(0.0, f64::max)
}

/// Coarsest grid among `grid` and its doublings whose solution agrees with the next doubling to
/// `rtol` (see [`refinement_gap`]). Steps stay fixed within each solve. `None` when no grid up
/// to `MAX_DOUBLINGS` doublings qualifies.
pub fn solve_resolved(p: &ModelParams, kind: EquilibriumKind, grid: TimeGrid, rtol: f64) -> Result<Option<EquilibriumCurves>, SolveError> {
    // A coarse grid may blow up where a finer one does not; any other error is final.
    let attempt = |n: usize| match solve_curves(p, kind, TimeGrid::new(n)) {
        Ok(c) => Ok(Some(c)),
        Err(SolveError::Blowup { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let mut n = grid.n_steps;
    let mut coarse = attempt(n)?;
    for _ in 0..MAX_DOUBLINGS {
        n *= 2;
        let fine = attempt(n)?;
        if let (Some(c), Some(f)) = (&coarse, &fine) {
            if refinement_gap(c, f) <= rtol {
                return Ok(coarse);
            }
        }
        coarse = fine;
    }
    Ok(None)
}

impl EquilibriumCurves {
    /// Curves for an externally prescribed mixing function `t -> (B(t), B'(t))`.
    ///
    /// The filter quantities `A, Sigma, F1, F2` follow from their ODEs. These curves are not an
    /// equilibrium; they serve oracle experiments such as an uninformative price (`B = 0`).
    pub fn with_prescribed_mixing(
        p: &ModelParams,
        kind: EquilibriumKind,
        grid: TimeGrid,
        mixing: impl Fn(f64) -> (f64, f64),
    ) -> Result<EquilibriumCurves, SolveError> {
        p.validate(kind)?;
        let (b0, _) = mixing(0.0);
        let mut q = p.clone();
        q.b0 = b0;
        let (a0, s0) = initial_filter(&q)?;
        integrate(kind, grid, [b0, a0, s0, 1.0, 0.0], |t, _, _| {
            let (b, d) = mixing(t);
            Ok((d, Some(b)))
        })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn t(&self, k: usize) -> f64 {
        self.grid.t(k)
    }

    /// Residual-integral kernel `B' Sigma / F1`.
    pub fn kernel(&self, k: usize) -> f64 {
        self.b_prime[k] * self.sigma_filt[k] / self.f1[k]
    }

    /// Human-readable list of violated curve invariants at tolerance `tol`.
    pub fn invariant_violations(&self, p: &ModelParams, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.len();
        if (self.f1[0] - 1.0).abs() > tol || self.f2[0].abs() > tol {
            out.push(String::from("F1(0) = 1 and F2(0) = 0 fail"));
        }
        for k in 0..n {
            let t = self.t(k);
            if self.sigma_filt[k] < -tol {
                out.push(format!("Sigma < 0 at t = {t}"));
            }
            if self.a[k] < -1.0 - tol || self.a[k] > tol {
                out.push(format!("A outside [-1, 0] at t = {t}"));
            }
            if !(self.f1[k] > 0.0) {
                out.push(format!("F1 <= 0 at t = {t}"));
            }
            if self.f2[k] < -tol {
                out.push(format!("F2 < 0 at t = {t}"));
            }
            if k > 0 {
                if self.sigma_filt[k] > self.sigma_filt[k - 1] + tol {
                    out.push(format!("Sigma increases at t = {t}"));
                }
                if self.a[k] > self.a[k - 1] + tol {
                    out.push(format!("A increases at t = {t}"));
                }
                if self.f1[k] > self.f1[k - 1] + tol {
                    out.push(format!("F1 increases at t = {t}"));
                }
                if self.f2[k] < self.f2[k - 1] - tol {
                    out.push(format!("F2 decreases at t = {t}"));
                }
            }
        }
        if self.kind == EquilibriumKind::PriceImpact && p.m_bar() * p.b0 + 1.0 < 0.0 {
            for k in 0..n {
                if !(self.b[k] < 0.0 && self.b_prime[k] < 0.0) {
                    out.push(format!("B or B' not negative at t = {}", self.t(k)));
                }
            }
        }
        out
    }
}

fn field(d: f64, y: &[f64; 5]) -> [f64; 5] {
    let g = d * d * y[2];
    [d, -g * (y[1] + 1.0), -d * d * y[2] * y[2], -g * y[3], g / y[3]]
}

/// RK4 on `y = (B, A, Sigma, F1, F2)`. The slope closure returns `B'` and optionally an overriding `B`.
fn integrate(
    kind: EquilibriumKind,
    grid: TimeGrid,
    y0: [f64; 5],
    mut slope: impl FnMut(f64, f64, f64) -> Result<(f64, Option<f64>), SolveError>,
) -> Result<EquilibriumCurves, SolveError> {
    let n = grid.len();
    let h = grid.dt();
    let mut out =
        EquilibriumCurves { grid, kind, b: vec![0.0; n], b_prime: vec![0.0; n], a: vec![0.0; n], sigma_filt: vec![0.0; n], f1: vec![0.0; n], f2: vec![0.0; n] };
    let stage = |y: &[f64; 5], kk: &[f64; 5], c: f64| {
        let mut z = *y;
        for i in 0..5 {
            z[i] += c * kk[i];
        }
        z
    };
    let mut y = y0;
    for k in 0..n {
        let t = grid.t(k);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::Blowup { t });
        }
        let (d, b_over) = slope(t, y[1], y[0])?;
        if let Some(b) = b_over {
            y[0] = b;
        }
        out.b[k] = y[0];
        out.b_prime[k] = d;
        out.a[k] = y[1];
        out.sigma_filt[k] = y[2];
        out.f1[k] = y[3];
        out.f2[k] = y[4];
        if k + 1 == n {
            break;
        }
        let k1 = field(d, &y);
        let y2 = stage(&y, &k1, 0.5 * h);
        let k2 = field(slope(t + 0.5 * h, y2[1], y2[0])?.0, &y2);
        let y3 = stage(&y, &k2, 0.5 * h);
        let k3 = field(slope(t + 0.5 * h, y3[1], y3[0])?.0, &y3);
        let y4 = stage(&y, &k3, h);
        let k4 = field(slope(grid.t(k + 1), y4[1], y4[0])?.0, &y4);
        for i in 0..5 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(out)
}

/// B cross-check requested on curves of the wrong kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KindMismatch {
    pub expected: EquilibriumKind,
    pub found: EquilibriumKind,
}

impl fmt::Display for KindMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "operation needs {} curves, got {}", self.expected, self.found)
    }
}

impl core::error::Error for KindMismatch {}

/// Max absolute residuals against the explicit solutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossCheckReport {
    /// Only for price-impact curves.
    pub b: Option<f64>,
    pub sigma: f64,
    pub a: f64,
}

impl CrossCheckReport {
    pub fn max(&self) -> f64 {
        self.b.unwrap_or(0.0).max(self.sigma).max(self.a)
    }
}

/// Explicit exponential-integral form of the price-impact `B`.
pub fn explicit_b(curves: &EquilibriumCurves, p: &ModelParams) -> Result<Vec<f64>, KindMismatch> {
    if curves.kind != EquilibriumKind::PriceImpact {
        return Err(KindMismatch { expected: EquilibriumKind::PriceImpact, found: curves.kind });
    }
    let h = curves.grid.dt();
    let mb = p.m_bar();
    let base: Vec<f64> = (0..curves.len()).map(|k| 2.0 * p.kappa.at(curves.t(k)) / (p.gamma * (curves.a[k] + 1.0 + mb))).collect();
    let rate: Vec<f64> = base.iter().map(|v| mb * v).collect();
    let big_i = cumulative_simpson(&rate, h);
    let forced: Vec<f64> = base.iter().zip(&big_i).map(|(v, i)| v * libm::exp(-i)).collect();
    let acc = cumulative_simpson(&forced, h);
    Ok(big_i.iter().zip(&acc).map(|(i, c)| libm::exp(*i) * (p.b0 + c)).collect())
}

/// `Sigma(0) / (1 + Sigma(0) * integral of B'^2)`, well defined when `Sigma(0) = 0`.
pub fn explicit_sigma(curves: &EquilibriumCurves) -> Vec<f64> {
    let s0 = curves.sigma_filt[0];
    let sq: Vec<f64> = curves.b_prime.iter().map(|d| d * d).collect();
    cumulative_simpson(&sq, curves.grid.dt()).iter().map(|i| s0 / (1.0 + s0 * i)).collect()
}

/// `-e^{-G(t)} c0 - integral_0^t e^{-(G(t)-G(s))} B'^2 Sigma ds` with `G = integral B'^2 Sigma`.
pub fn explicit_a(curves: &EquilibriumCurves) -> Vec<f64> {
    let h = curves.grid.dt();
    let c = -curves.a[0];
    let rate: Vec<f64> = (0..curves.len()).map(|k| curves.b_prime[k] * curves.b_prime[k] * curves.sigma_filt[k]).collect();
    let g = cumulative_simpson(&rate, h);
    let weighted: Vec<f64> = rate.iter().zip(&g).map(|(r, gk)| r * libm::exp(*gk)).collect();
    let acc = cumulative_simpson(&weighted, h);
    g.iter().zip(&acc).map(|(gk, ak)| -libm::exp(-gk) * (c + ak)).collect()
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Residuals of the integrated curves against the explicit forms; no B check for Nash.
pub fn explicit_cross_checks(curves: &EquilibriumCurves, p: &ModelParams) -> CrossCheckReport {
    let b = explicit_b(curves, p).ok().map(|e| max_abs_diff(&e, &curves.b));
    CrossCheckReport { b, sigma: max_abs_diff(&explicit_sigma(curves), &curves.sigma_filt), a: max_abs_diff(&explicit_a(curves), &curves.a) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PenaltySpec;

    fn fig1() -> ModelParams {
        ModelParams::figure_base(1.0, 1.0)
    }

    #[test]
    fn resolution_keeps_smooth_grids_and_refines_stiff_ones() {
        let c = solve_resolved(&fig1(), EquilibriumKind::PriceImpact, TimeGrid::new(400), 1e-6).unwrap().unwrap();
        assert_eq!(c.grid.n_steps, 400);
        // kappa / gamma near 12: B' is steep at the open and 400 RK4 steps overshoot -1 / Mbar.
        let p = ModelParams {
            m_rebalancers: 4,
            m_trackers: 6,
            sigma_a: 1.108,
            sigma_w0: 1.831,
            gamma: 0.2,
            alpha: 0.0,
            b0: -1.499,
            kappa: PenaltySpec::Constant(2.317),
        };
        assert!(!solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(400)).unwrap().invariant_violations(&p, 1e-9).is_empty());
        let c = solve_resolved(&p, EquilibriumKind::PriceImpact, TimeGrid::new(400), 1e-6).unwrap().unwrap();
        assert!(c.grid.n_steps > 400);
        assert!(c.invariant_violations(&p, 1e-9).is_empty());
        assert!(matches!(solve_resolved(&fig1(), EquilibriumKind::PriceImpact, TimeGrid::new(400), -1.0), Ok(None)));
    }

    #[test]
    fn initial_values_by_hand() {
        let c = solve_curves(&fig1(), EquilibriumKind::PriceImpact, TimeGrid::new(100)).unwrap();
        assert!((c.a[0] + 0.137_931_034_482_758_6).abs() < 1e-15);
        assert!((c.sigma_filt[0] - 3.448_275_862_068_965).abs() < 1e-14);
        // 2 * (10 * (-0.2) + 1) / (-0.137931 + 11)
        assert!((c.b_prime[0] + 0.184_126_984_126_984_1).abs() < 1e-15);
        assert_eq!((c.f1[0], c.f2[0]), (1.0, 0.0));
    }

    #[test]
    fn zero_b0_gives_full_prior_variance() {
        let mut p = fig1();
        p.b0 = 0.0;
        let c = solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(50)).unwrap();
        assert_eq!(c.a[0], 0.0);
        assert_eq!(c.sigma_filt[0], 4.0);
    }

    #[test]
    fn degenerate_filter_rejected() {
        let mut p = fig1();
        p.b0 = 0.0;
        p.sigma_w0 = 0.0;
        assert_eq!(solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(10)), Err(SolveError::DegenerateFilter));
        let mut p = fig1();
        p.m_rebalancers = 1;
        p.sigma_w0 = 0.0;
        assert_eq!(solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(10)), Err(SolveError::DegenerateFilter));
    }

    #[test]
    fn static_learning_keeps_sigma_zero() {
        let mut p = fig1();
        p.sigma_w0 = 0.0;
        let c = solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(200)).unwrap();
        assert!(c.sigma_filt.iter().all(|s| *s == 0.0));
        assert!(c.a.iter().all(|a| *a == -1.0));
        assert!(c.f1.iter().all(|f| *f == 1.0));
    }

    #[test]
    fn invalid_params_propagate() {
        let mut p = fig1();
        p.m_rebalancers = 1;
        p.m_trackers = 1;
        assert!(matches!(solve_curves(&p, EquilibriumKind::Nash, TimeGrid::new(10)), Err(SolveError::Invalid(_))));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn f1_f2_closed_forms() {
        let c = solve_curves(&fig1(), EquilibriumKind::PriceImpact, TimeGrid::new(400)).unwrap();
        let s0 = c.sigma_filt[0];
        let sq: Vec<f64> = c.b_prime.iter().map(|d| d * d).collect();
        let i = cumulative_simpson(&sq, c.grid.dt());
        for k in 0..c.len() {
            assert!((c.f1[k] - c.sigma_filt[k] / s0).abs() < 1e-10);
            assert!((c.f2[k] - s0 * i[k]).abs() < 1e-9);
            assert!((c.a[k] + c.f1[k] * (-c.a[0] + c.f2[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn tiny_kappa_freezes_b() {
        let mut p = fig1();
        p.kappa = PenaltySpec::Constant(1e-9);
        let c = solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(200)).unwrap();
        assert!(c.b.iter().all(|b| (b - p.b0).abs() < 1e-7));
    }

    #[test]
    fn prescribed_zero_mixing() {
        let c = EquilibriumCurves::with_prescribed_mixing(&fig1(), EquilibriumKind::PriceImpact, TimeGrid::new(20), |_| (0.0, 0.0)).unwrap();
        assert!(c.b.iter().chain(&c.b_prime).all(|v| *v == 0.0));
        assert!(c.a.iter().all(|v| *v == 0.0));
        assert!(c.sigma_filt.iter().all(|v| *v == 4.0));
    }

    #[test]
    fn nash_cross_check_skips_b() {
        let c = solve_curves(&fig1(), EquilibriumKind::Nash, TimeGrid::new(400)).unwrap();
        assert!(explicit_b(&c, &fig1()).is_err());
        let r = explicit_cross_checks(&c, &fig1());
        assert!(r.b.is_none());
        assert!(r.sigma < 1e-9 && r.a < 1e-9);
    }
}
