//! Closed-form equilibrium loadings assembled from solved curves.
//!
//! Holdings and drifts are written on the state processes `(a_i, q_i, eta, Y)` for a
//! rebalancer and `(eta, w, a_Sigma)` for a tracker. `Y = w - B a_Sigma` links the two frames.

use alloc::vec::Vec;
use core::fmt;

use crate::model::{EquilibriumKind, ModelParams};
use crate::ode::{EquilibriumCurves, KindMismatch};

pub mod nash;
pub mod ortho;
pub mod pi;

pub use ortho::{basis_loadings, ortho_coeffs, BasisLoadings, OrthoCoeffs};

/// Curve values and parameters at one grid node, the input of every formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub t: f64,
    pub m: f64,
    pub m_bar: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub db: f64,
    pub sigma: f64,
    pub f1: f64,
    pub f2: f64,
}

impl Node {
    pub fn at(curves: &EquilibriumCurves, p: &ModelParams, k: usize) -> Node {
        let t = curves.t(k);
        Node {
            t,
            m: p.m(),
            m_bar: p.m_bar(),
            kappa: p.kappa.at(t),
            alpha: p.alpha,
            gamma: p.gamma,
            a: curves.a[k],
            b: curves.b[k],
            db: curves.b_prime[k],
            sigma: curves.sigma_filt[k],
            f1: curves.f1[k],
            f2: curves.f2[k],
        }
    }

    /// `M + Mbar`
    pub fn n(&self) -> f64 {
        self.m + self.m_bar
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffError {
    DenominatorVanishes {
        t: f64,
        formula: &'static str,
    },
    /// Two algebraic forms of one loading disagree beyond 1e-12.
    FormMismatch {
        t: f64,
        loading: &'static str,
        first: f64,
        second: f64,
    },
    KindMismatch(KindMismatch),
}

impl fmt::Display for CoeffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffError::DenominatorVanishes { t, formula } => write!(f, "denominator of {formula} vanishes at t = {t}"),
            CoeffError::FormMismatch { t, loading, first, second } => {
                write!(f, "forms of {loading} disagree at t = {t}: {first} vs {second}")
            }
            CoeffError::KindMismatch(k) => write!(f, "{k}"),
        }
    }
}

impl core::error::Error for CoeffError {}

impl From<KindMismatch> for CoeffError {
    fn from(k: KindMismatch) -> Self {
        CoeffError::KindMismatch(k)
    }
}

/// `num / den` unless `den` is zero relative to `scale`.
pub(crate) fn quot(num: f64, den: f64, scale: f64, t: f64, formula: &'static str) -> Result<f64, CoeffError> {
    if !(den.abs() > 1e-14 * scale.abs().max(f64::MIN_POSITIVE)) || !den.is_finite() {
        return Err(CoeffError::DenominatorVanishes { t, formula });
    }
    Ok(num / den)
}

/// Holding loadings at one node. Trackers are identical, so one set covers all of them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HoldingLoadings {
    pub reb_on_ai: f64,
    pub reb_on_qi: f64,
    pub reb_on_eta: f64,
    pub reb_on_y: f64,
    pub trk_on_eta: f64,
    pub trk_on_w: f64,
    pub trk_on_asigma: f64,
}

impl HoldingLoadings {
    pub const NAMES: [&'static str; 7] = ["reb_on_ai", "reb_on_qi", "reb_on_eta", "reb_on_Y", "trk_on_eta", "trk_on_w", "trk_on_aSigma"];

    pub fn values(&self) -> [f64; 7] {
        [self.reb_on_ai, self.reb_on_qi, self.reb_on_eta, self.reb_on_y, self.trk_on_eta, self.trk_on_w, self.trk_on_asigma]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        HoldingLoadings { reb_on_ai: v[0], reb_on_qi: v[1], reb_on_eta: v[2], reb_on_y: v[3], trk_on_eta: v[4], trk_on_w: v[5], trk_on_asigma: v[6] }
    }

    pub fn rebalancer(&self, ai: f64, qi: f64, eta: f64, y: f64) -> f64 {
        self.reb_on_ai * ai + self.reb_on_qi * qi + self.reb_on_eta * eta + self.reb_on_y * y
    }

    pub fn tracker(&self, eta: f64, w: f64, a_sigma: f64) -> f64 {
        self.trk_on_eta * eta + self.trk_on_w * w + self.trk_on_asigma * a_sigma
    }
}

/// Price-drift loadings at one node in both filtrations. Diffusion is `gamma` in both.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DriftLoadings {
    pub trk_on_eta: f64,
    pub trk_on_w: f64,
    pub trk_on_asigma: f64,
    pub reb_on_eta: f64,
    pub reb_on_y: f64,
    /// Loading on `a_i + q_i`.
    pub reb_on_aiq: f64,
}

impl DriftLoadings {
    pub const NAMES: [&'static str; 6] =
        ["drift_trk_on_eta", "drift_trk_on_w", "drift_trk_on_aSigma", "drift_reb_on_eta", "drift_reb_on_Y", "drift_reb_on_aiq"];

    pub fn values(&self) -> [f64; 6] {
        [self.trk_on_eta, self.trk_on_w, self.trk_on_asigma, self.reb_on_eta, self.reb_on_y, self.reb_on_aiq]
    }

    pub fn tracker(&self, eta: f64, w: f64, a_sigma: f64) -> f64 {
        self.trk_on_eta * eta + self.trk_on_w * w + self.trk_on_asigma * a_sigma
    }

    pub fn rebalancer(&self, ai: f64, qi: f64, eta: f64, y: f64) -> f64 {
        self.reb_on_eta * eta + self.reb_on_y * y + self.reb_on_aiq * (ai + qi)
    }
}

/// Per-node perception coefficients of either family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perception {
    PriceImpact(pi::PiPerception),
    Nash(nash::NashPerception),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionCoeffs {
    pub kind: EquilibriumKind,
    pub nodes: Vec<Perception>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoldingsCoeffs {
    pub kind: EquilibriumKind,
    pub nodes: Vec<HoldingLoadings>,
}

impl HoldingsCoeffs {
    /// Copy with `delta` added to one named loading at every node. Fault-injection hook for the verifier.
    pub fn perturbed(&self, loading: &str, delta: f64) -> Option<HoldingsCoeffs> {
        let idx = HoldingLoadings::NAMES.iter().position(|n| *n == loading)?;
        let nodes = self
            .nodes
            .iter()
            .map(|h| {
                let mut v = h.values();
                v[idx] += delta;
                HoldingLoadings::from_values(v)
            })
            .collect();
        Some(HoldingsCoeffs { kind: self.kind, nodes })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftCoeffs {
    pub kind: EquilibriumKind,
    pub gamma: f64,
    pub nodes: Vec<DriftLoadings>,
}

/// Everything the simulator needs at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeCoeffs {
    pub node: Node,
    pub holdings: HoldingLoadings,
    pub drift: DriftLoadings,
    pub perception: Perception,
}

pub fn perception_at(kind: EquilibriumKind, node: &Node) -> Result<Perception, CoeffError> {
    Ok(match kind {
        EquilibriumKind::PriceImpact => Perception::PriceImpact(pi::perception(node)?),
        EquilibriumKind::Nash => Perception::Nash(nash::perception(node)?),
    })
}

/// Tolerance scales with the largest loading at the node: small loadings are differences of large ones.
fn agree(t: f64, names: &'static [&'static str], x: &[f64], y: &[f64]) -> Result<(), CoeffError> {
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..x.len() {
        if !((x[i] - y[i]).abs() <= 1e-12 * scale) {
            return Err(CoeffError::FormMismatch { t, loading: names[i], first: x[i], second: y[i] });
        }
    }
    Ok(())
}

/// Holdings at one node, with the two algebraic forms cross-asserted.
pub fn holdings_at(kind: EquilibriumKind, node: &Node) -> Result<HoldingLoadings, CoeffError> {
    let (first, second) = match kind {
        EquilibriumKind::PriceImpact => (pi::holdings(node), pi::holdings_substituted(node)?),
        EquilibriumKind::Nash => (nash::holdings(node)?, nash::holdings_from_maximizers(node)?),
    };
    agree(node.t, &HoldingLoadings::NAMES, &first.values(), &second.values())?;
    Ok(first)
}

pub fn drift_at(kind: EquilibriumKind, node: &Node) -> Result<DriftLoadings, CoeffError> {
    match kind {
        EquilibriumKind::PriceImpact => Ok(pi::drift(node)),
        EquilibriumKind::Nash => nash::drift(node),
    }
}

pub fn node_coeffs(curves: &EquilibriumCurves, p: &ModelParams, k: usize) -> Result<NodeCoeffs, CoeffError> {
    let node = Node::at(curves, p, k);
    Ok(NodeCoeffs { node, holdings: holdings_at(curves.kind, &node)?, drift: drift_at(curves.kind, &node)?, perception: perception_at(curves.kind, &node)? })
}

pub fn perception_coeffs(curves: &EquilibriumCurves, p: &ModelParams) -> Result<PerceptionCoeffs, CoeffError> {
    let nodes = (0..curves.len()).map(|k| perception_at(curves.kind, &Node::at(curves, p, k))).collect::<Result<_, _>>()?;
    Ok(PerceptionCoeffs { kind: curves.kind, nodes })
}

pub fn holdings_coeffs(curves: &EquilibriumCurves, p: &ModelParams) -> Result<HoldingsCoeffs, CoeffError> {
    let nodes = (0..curves.len()).map(|k| holdings_at(curves.kind, &Node::at(curves, p, k))).collect::<Result<_, _>>()?;
    Ok(HoldingsCoeffs { kind: curves.kind, nodes })
}

pub fn drift_coeffs(curves: &EquilibriumCurves, p: &ModelParams) -> Result<DriftCoeffs, CoeffError> {
    let nodes = (0..curves.len()).map(|k| drift_at(curves.kind, &Node::at(curves, p, k))).collect::<Result<_, _>>()?;
    Ok(DriftCoeffs { kind: curves.kind, gamma: p.gamma, nodes })
}

/// Public state of one rebalancer and the market at a node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MarketState {
    pub ai: f64,
    pub qi: f64,
    pub eta: f64,
    pub a_sigma: f64,
    pub w: f64,
}

impl MarketState {
    pub fn y(&self, node: &Node) -> f64 {
        self.w - node.b * self.a_sigma
    }
}

/// Signed residual and the absolute size of the terms it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub diff: f64,
    pub scale: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.diff.abs()
        } else {
            self.diff.abs() / self.scale
        }
    }
}

pub(crate) fn residual(lhs: &[f64], rhs: &[f64]) -> Residual {
    let l: f64 = lhs.iter().sum();
    let r: f64 = rhs.iter().sum();
    let scale = lhs.iter().chain(rhs).map(|v| v.abs()).sum();
    Residual { diff: l - r, scale }
}

/// Perceived drift of the rebalancer and of a tracker coincide once innovations are mapped to `dw°`.
pub fn drift_matching(c: &NodeCoeffs, s: &MarketState) -> Residual {
    match c.perception {
        Perception::PriceImpact(f) => pi::drift_matching(&c.node, &f, &c.holdings, s),
        Perception::Nash(nu) => nash::drift_matching(&c.node, &nu, &c.holdings, s),
    }
}

/// Innovations identity: rebalancer-frame drift minus `gamma B' (X - q_i)` equals the tracker-frame drift.
pub fn frame_equivalence(n: &Node, d: &DriftLoadings, s: &MarketState) -> Residual {
    let y = s.y(n);
    let x = s.a_sigma - s.ai;
    let lhs = [d.reb_on_eta * s.eta, d.reb_on_y * y, d.reb_on_aiq * (s.ai + s.qi), -n.gamma * n.db * (x - s.qi)];
    let rhs = [d.trk_on_eta * s.eta, d.trk_on_w * s.w, d.trk_on_asigma * s.a_sigma];
    residual(&lhs, &rhs)
}

/// Coefficients of `M theta_i` summed over rebalancers plus `Mbar theta_j`, on `(eta, w, a_Sigma)`.
///
/// Uses `sum_i q_i = eta + A a_Sigma`. All three vanish in equilibrium.
pub fn aggregate_clearing(n: &Node, h: &HoldingLoadings) -> [Residual; 3] {
    let (m, mb) = (n.m, n.m_bar);
    [
        residual(&[h.reb_on_qi, m * h.reb_on_eta, mb * h.trk_on_eta], &[]),
        residual(&[m * h.reb_on_y, mb * h.trk_on_w], &[]),
        residual(&[h.reb_on_ai, n.a * h.reb_on_qi, -m * n.b * h.reb_on_y, mb * h.trk_on_asigma], &[]),
    ]
}

/// Price-impact diagnostic `-2 (kappa(t) - alpha) / (M + Mbar - 2)` of the Nash rebalancer perception.
pub fn price_impact_diagnostic(p: &ModelParams, t: f64) -> Result<f64, crate::model::ParamError> {
    if p.m_rebalancers + p.m_trackers <= 2 {
        return Err(crate::model::ParamError::NashSizeTooSmall { m: p.m_rebalancers, m_bar: p.m_trackers });
    }
    let k = p.kappa.at(t.clamp(0.0, 1.0));
    Ok(-2.0 * (k - p.alpha) / (p.n_total() - 2.0))
}
