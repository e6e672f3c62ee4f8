//! Loadings on the independent basis `(a_i, a_Sigma - a_i, w_0, w°_t, R_t)`.
//!
//! `R_t` is the stochastic integral of the kernel `B' Sigma / F1` against `dw°`. The loadings
//! come from composing the state-space loadings with the explicit solutions for
//! `Y`, `eta` and `q_i` on that basis.

use alloc::vec::Vec;

use super::{drift_at, holdings_at, CoeffError, Node};
use crate::model::{EquilibriumKind, ModelParams};
use crate::ode::{EquilibriumCurves, KindMismatch};

/// A linear functional on the basis, in the order `[a_i, X, w_0, w°, R]` with `X = a_Sigma - a_i`.
pub type Basis = [f64; 5];

pub const BASIS_NAMES: [&str; 5] = ["ai", "aSigma_minus_ai", "w0", "wcirc", "resid_integral"];

/// Every state process as a basis functional at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateBasis {
    pub ai: Basis,
    pub a_sigma: Basis,
    pub w: Basis,
    pub y: Basis,
    pub eta: Basis,
    pub qi: Basis,
}

pub fn state_basis(c: &Node, p: &ModelParams) -> StateBasis {
    let k0 = p.filter_gain0();
    let b0 = p.b0;
    let (m, f1, f2, b) = (c.m, c.f1, c.f2, c.b);
    let e_a = f1 * (m * k0 * b0 + m * f2);
    let q_x = f1 * (k0 * b0 + f2);
    StateBasis {
        ai: [1.0, 0.0, 0.0, 0.0, 0.0],
        a_sigma: [1.0, 1.0, 0.0, 0.0, 0.0],
        w: [0.0, 0.0, 1.0, 1.0, 0.0],
        y: [-b, -b, 1.0, 1.0, 0.0],
        eta: [e_a, e_a, -f1 * m * k0, 0.0, -m * f1],
        qi: [0.0, q_x, -f1 * k0, 0.0, -f1],
    }
}

pub fn dot(x: &Basis, u: &[f64; 5]) -> f64 {
    x.iter().zip(u).map(|(a, b)| a * b).sum()
}

fn combo(terms: &[(f64, &Basis)]) -> Basis {
    let mut out = [0.0; 5];
    for (w, v) in terms {
        for i in 0..5 {
            out[i] += w * v[i];
        }
    }
    out
}

/// Holdings and drifts of both trader types on the basis at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisLoadings {
    pub t: f64,
    pub reb: Basis,
    pub trk: Basis,
    pub drift_reb: Basis,
    pub drift_trk: Basis,
    /// `B'(t) Sigma(t) / F1(t)`
    pub kernel: f64,
}

pub fn basis_loadings_at(curves: &EquilibriumCurves, p: &ModelParams, k: usize) -> Result<BasisLoadings, CoeffError> {
    let c = Node::at(curves, p, k);
    let h = holdings_at(curves.kind, &c)?;
    let d = drift_at(curves.kind, &c)?;
    let s = state_basis(&c, p);
    Ok(BasisLoadings {
        t: c.t,
        reb: combo(&[(h.reb_on_ai, &s.ai), (h.reb_on_qi, &s.qi), (h.reb_on_eta, &s.eta), (h.reb_on_y, &s.y)]),
        trk: combo(&[(h.trk_on_eta, &s.eta), (h.trk_on_w, &s.w), (h.trk_on_asigma, &s.a_sigma)]),
        drift_reb: combo(&[(d.reb_on_eta, &s.eta), (d.reb_on_y, &s.y), (d.reb_on_aiq, &s.ai), (d.reb_on_aiq, &s.qi)]),
        drift_trk: combo(&[(d.trk_on_eta, &s.eta), (d.trk_on_w, &s.w), (d.trk_on_asigma, &s.a_sigma)]),
        kernel: curves.kernel(k),
    })
}

/// Basis loadings for either kind. The Nash ones have no closed form to compare against.
pub fn basis_loadings(curves: &EquilibriumCurves, p: &ModelParams) -> Result<Vec<BasisLoadings>, CoeffError> {
    (0..curves.len()).map(|k| basis_loadings_at(curves, p, k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoCoeffs {
    pub nodes: Vec<BasisLoadings>,
}

/// Orthogonal representations of the price-impact holdings and drifts.
pub fn ortho_coeffs(curves: &EquilibriumCurves, p: &ModelParams) -> Result<OrthoCoeffs, CoeffError> {
    if curves.kind != EquilibriumKind::PriceImpact {
        return Err(KindMismatch { expected: EquilibriumKind::PriceImpact, found: curves.kind }.into());
    }
    Ok(OrthoCoeffs { nodes: basis_loadings(curves, p)? })
}
