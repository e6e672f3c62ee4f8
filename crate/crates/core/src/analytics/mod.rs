//! Deterministic and Monte Carlo statistics of the equilibrium processes.
//!
//! The deterministic side works on the independent basis `(a_i, X, w_0, w°_t, R_t)`. Its
//! covariance is known in closed form up to two quadratures of the kernel `g = B' Sigma / F1`.

use alloc::vec::Vec;
use core::fmt;

use crate::coeffs::{basis_loadings, holdings_at, ortho::Basis, BasisLoadings, CoeffError, HoldingLoadings, Node};
use crate::model::ModelParams;
use crate::ode::EquilibriumCurves;
use crate::quad::{cumulative_simpson, derivative};

mod mc;
mod value;

pub use mc::{cross_correlation_estimate, grid_extrapolate, price_autocorrelation, trading_autocorrelation, CorrelationCurve, HolderSeries};
pub use value::{rebalancing_cost, value_function, EvalState, QuadFit, RebalancingCost, ValueOptions, ValuePartial, ValuePlan, ValueSurface};

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticsError {
    Coeff(CoeffError),
    /// Both holding diffusion loadings vanish, so the instantaneous correlation is undefined.
    ZeroDiffusion {
        t: f64,
    },
    /// The requested bandwidth or its half is not an accumulated stride of the batch.
    BandwidthTooCoarse {
        stride: usize,
    },
    DegenerateIncrements {
        t: f64,
    },
    InsufficientPaths {
        worst_se: f64,
        ceiling: f64,
    },
    MissingBaseline,
    /// The five-point derivative needs at least five nodes.
    TooFewNodes(usize),
    InvalidPathCount,
}

impl fmt::Display for AnalyticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticsError::Coeff(e) => write!(f, "{e}"),
            AnalyticsError::ZeroDiffusion { t } => write!(f, "holding diffusion loadings vanish at t = {t}"),
            AnalyticsError::BandwidthTooCoarse { stride } => write!(f, "bandwidth of {stride} steps is not available in the batch"),
            AnalyticsError::DegenerateIncrements { t } => write!(f, "increments have zero variance at t = {t}"),
            AnalyticsError::InsufficientPaths { worst_se, ceiling } => {
                write!(f, "standard error {worst_se} exceeds ceiling {ceiling}; more paths needed")
            }
            AnalyticsError::MissingBaseline => write!(f, "target grid lacks a_i = 0"),
            AnalyticsError::TooFewNodes(n) => write!(f, "{n} nodes are too few for the derivative stencil"),
            AnalyticsError::InvalidPathCount => write!(f, "n_paths must be at least 2"),
        }
    }
}

impl core::error::Error for AnalyticsError {}

impl From<CoeffError> for AnalyticsError {
    fn from(e: CoeffError) -> Self {
        AnalyticsError::Coeff(e)
    }
}

pub type Cov5 = [[f64; 5]; 5];

/// Covariance of `(a_i, X, w_0, w°_t, R_t)` at every node.
pub fn basis_covariance(curves: &EquilibriumCurves, p: &ModelParams) -> Vec<Cov5> {
    let h = curves.grid.dt();
    let g: Vec<f64> = (0..curves.len()).map(|k| curves.kernel(k)).collect();
    let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
    let ig = cumulative_simpson(&g, h);
    let ig2 = cumulative_simpson(&g2, h);
    let s2 = p.sigma_a * p.sigma_a;
    (0..curves.len())
        .map(|k| {
            let mut c = [[0.0; 5]; 5];
            c[0][0] = s2;
            c[1][1] = (p.m() - 1.0) * s2;
            c[2][2] = p.sigma_w0 * p.sigma_w0;
            c[3][3] = curves.t(k);
            c[3][4] = ig[k];
            c[4][3] = ig[k];
            c[4][4] = ig2[k];
            c
        })
        .collect()
}

pub fn bilinear(x: &Basis, c: &Cov5, y: &Basis) -> f64 {
    let mut s = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            s += x[i] * c[i][j] * y[j];
        }
    }
    s
}

/// `dw°` loading of `d(L . u)` given `L` and its time derivative: `L_w° + L_R g`.
fn diffusion_of(l: &Basis, g: f64) -> f64 {
    l[3] + l[4] * g
}

/// Exact `h -> 0` limits of the scaled autocorrelations and their ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticCorrelations {
    pub t: Vec<f64>,
    pub rho_reb: Vec<f64>,
    pub rho_trk: Vec<f64>,
    pub rho_price: Vec<f64>,
    /// Holding diffusion loadings on `dw°`.
    pub sigma_reb: Vec<f64>,
    pub sigma_trk: Vec<f64>,
}

/// For `dZ = mu dt + s dw°` with `d mu = ... dt + c dw°`, the scaled correlation of consecutive
/// increments tends to `(E[mu^2] + s c) / s^2`.
fn scaled_limit(mu: &Basis, s: f64, c: f64, cov: &Cov5) -> f64 {
    (bilinear(mu, cov, mu) + s * c) / (s * s)
}

pub fn analytic_autocorrelations(curves: &EquilibriumCurves, p: &ModelParams) -> Result<AnalyticCorrelations, AnalyticsError> {
    let n = curves.len();
    if n < 5 {
        return Err(AnalyticsError::TooFewNodes(n));
    }
    let h = curves.grid.dt();
    let loads = basis_loadings(curves, p)?;
    let cov = basis_covariance(curves, p);
    let deriv = |pick: fn(&BasisLoadings) -> Basis| -> Vec<Basis> {
        let mut out = alloc::vec![[0.0; 5]; n];
        for j in 0..5 {
            let series: Vec<f64> = loads.iter().map(|l| pick(l)[j]).collect();
            for (row, v) in out.iter_mut().zip(derivative(&series, h)) {
                row[j] = v;
            }
        }
        out
    };
    let d_reb = deriv(|l| l.reb);
    let d_trk = deriv(|l| l.trk);
    let mut out = AnalyticCorrelations {
        t: Vec::with_capacity(n),
        rho_reb: Vec::with_capacity(n),
        rho_trk: Vec::with_capacity(n),
        rho_price: Vec::with_capacity(n),
        sigma_reb: Vec::with_capacity(n),
        sigma_trk: Vec::with_capacity(n),
    };
    for k in 0..n {
        let l = &loads[k];
        let g = l.kernel;
        let (sr, st) = (diffusion_of(&l.reb, g), diffusion_of(&l.trk, g));
        out.t.push(curves.t(k));
        out.sigma_reb.push(sr);
        out.sigma_trk.push(st);
        // The drift of L . u is L' . u; its dw° loading is L'_w° + L'_R g.
        out.rho_reb.push(scaled_limit(&d_reb[k], sr, diffusion_of(&d_reb[k], g), &cov[k]));
        out.rho_trk.push(scaled_limit(&d_trk[k], st, diffusion_of(&d_trk[k], g), &cov[k]));
        out.rho_price.push(scaled_limit(&l.drift_trk, p.gamma, diffusion_of(&l.drift_trk, g), &cov[k]));
    }
    Ok(out)
}

/// Holding diffusion loadings on `dw°` from the state-space coefficients.
///
/// State loadings: `Y` 1, `eta` `-M B' Sigma`, `q_i` `-B' Sigma`, `w` 1.
pub fn holding_diffusions(h: &HoldingLoadings, node: &Node) -> (f64, f64) {
    let bs = node.db * node.sigma;
    let reb = h.reb_on_y - h.reb_on_qi * bs - h.reb_on_eta * node.m * bs;
    let trk = h.trk_on_w - h.trk_on_eta * node.m * bs;
    (reb, trk)
}

/// Sign product of the two diffusion loadings.
pub fn correlation_from_diffusions(reb: f64, trk: f64, t: f64) -> Result<f64, AnalyticsError> {
    if reb == 0.0 || trk == 0.0 {
        return Err(AnalyticsError::ZeroDiffusion { t });
    }
    Ok(if (reb > 0.0) == (trk > 0.0) { 1.0 } else { -1.0 })
}

/// `lim corr(d theta_i, d theta_j)` at `t`, which lies on the grid up to rounding.
pub fn instantaneous_cross_correlation(curves: &EquilibriumCurves, p: &ModelParams, t: f64) -> Result<f64, AnalyticsError> {
    let k = curves.grid.node_of(t).unwrap_or_else(|| libm::round(t.clamp(0.0, 1.0) * curves.grid.n_steps as f64) as usize);
    let node = Node::at(curves, p, k);
    let h = holdings_at(curves.kind, &node)?;
    let (r, j) = holding_diffusions(&h, &node);
    correlation_from_diffusions(r, j, node.t)
}

/// Variance of the tracker-frame price drift at every node, by quadrature only.
pub fn drift_variance_curve(curves: &EquilibriumCurves, p: &ModelParams) -> Result<Vec<f64>, AnalyticsError> {
    let loads = basis_loadings(curves, p)?;
    let cov = basis_covariance(curves, p);
    Ok(loads.iter().zip(&cov).map(|(l, c)| bilinear(&l.drift_trk, c, &l.drift_trk)).collect())
}

#[cfg(test)]
mod tests;
