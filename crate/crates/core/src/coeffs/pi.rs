//! Price-impact equilibrium: perception coefficients, holdings and price drifts.

use super::{quot, residual, CoeffError, DriftLoadings, HoldingLoadings, MarketState, Node, Residual};

/// `f0..f3` for rebalancers and `fb3..fb5` for trackers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PiPerception {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub fb3: f64,
    pub fb4: f64,
    pub fb5: f64,
}

impl PiPerception {
    pub const NAMES: [&'static str; 7] = ["f0", "f1", "f2", "f3", "fbar3", "fbar4", "fbar5"];

    pub fn values(&self) -> [f64; 7] {
        [self.f0, self.f1, self.f2, self.f3, self.fb3, self.fb4, self.fb5]
    }

    /// Rebalancer perceived drift for arbitrary own holdings `theta`.
    pub fn rebalancer_drift(&self, alpha: f64, ai: f64, qi: f64, eta: f64, y: f64, theta: f64) -> f64 {
        self.f0 * y + self.f1 * ai + self.f2 * qi + self.f3 * eta + alpha * theta
    }

    /// Tracker perceived drift for arbitrary own holdings `theta`.
    pub fn tracker_drift(&self, alpha: f64, eta: f64, w: f64, a_sigma: f64, theta: f64) -> f64 {
        self.fb3 * eta + self.fb4 * a_sigma + self.fb5 * w + alpha * theta
    }
}

pub fn perception(c: &Node) -> Result<PiPerception, CoeffError> {
    let (k, al, g, db, n) = (c.kappa, c.alpha, c.gamma, c.db, c.n());
    // alpha - 2 kappa < 0 for every admissible node; the guard catches malformed input.
    let den = al - 2.0 * k;
    let sc = al.abs() + 2.0 * k;
    let q = |num: f64, d: f64, name| quot(num, d, sc * n, c.t, name);
    Ok(PiPerception {
        f0: q(4.0 * c.m_bar * k * (k - al), n * den, "f0")?,
        f1: quot(2.0 * g * db * (k - al) + 2.0 * al * k, den, sc, c.t, "f1")?,
        f2: quot(2.0 * g * db * (k - al), den, sc, c.t, "f2")?,
        f3: q(2.0 * g * db * (al - k), n * den, "f3")?,
        fb3: q(2.0 * g * db * (al - k), n * den, "fbar3")?,
        fb4: q(2.0 * (al - k) * (g * (c.a - c.m + 1.0) * db - 2.0 * k), n * den, "fbar4")?,
        fb5: q(2.0 * k * (al * (c.m - c.m_bar) + 2.0 * c.m_bar * k), n * den, "fbar5")?,
    })
}

/// Holdings as displayed with `B'` kept symbolic.
pub fn holdings(c: &Node) -> HoldingLoadings {
    let (k, al, g, db, n) = (c.kappa, c.alpha, c.gamma, c.db, c.n());
    let d = 2.0 * k - al;
    HoldingLoadings {
        reb_on_ai: -(g * db - 2.0 * k) / d,
        reb_on_qi: -g * db / d,
        reb_on_eta: g * db / (n * d),
        reb_on_y: -2.0 * c.m_bar * k / (n * d),
        trk_on_eta: g * db / (n * d),
        trk_on_w: 2.0 * c.m * k / (n * d),
        trk_on_asigma: (g * (c.a - c.m + 1.0) * db - 2.0 * k) / (n * d),
    }
}

/// Holdings with the price-impact `B'` right-hand side substituted.
pub fn holdings_substituted(c: &Node) -> Result<HoldingLoadings, CoeffError> {
    let (k, al, b, a, mb, n) = (c.kappa, c.alpha, c.b, c.a, c.m_bar, c.n());
    let e = al - 2.0 * k;
    let r = a + mb + 1.0;
    let sc = (a.abs() + mb + 1.0) * (al.abs() + 2.0 * k);
    let big = quot(1.0, r * e, sc, c.t, "A + Mbar + 1")?;
    Ok(HoldingLoadings {
        reb_on_ai: -2.0 * k * (a + mb * (1.0 - b)) * big,
        reb_on_qi: 2.0 * k * (mb * b + 1.0) * big,
        reb_on_eta: -2.0 * k * (mb * b + 1.0) * big / n,
        reb_on_y: 2.0 * mb * k / (n * e),
        trk_on_eta: -2.0 * k * (mb * b + 1.0) * big / n,
        trk_on_w: -2.0 * c.m * k / (n * e),
        trk_on_asigma: 2.0 * k * (mb * b * (-a + c.m - 1.0) + c.m + mb) * big / n,
    })
}

/// Maximizers of the linear-quadratic problems given the perception coefficients.
pub fn holdings_from_perception(c: &Node, f: &PiPerception) -> HoldingLoadings {
    let d = 2.0 * (c.kappa - c.alpha);
    HoldingLoadings {
        reb_on_ai: (f.f1 + 2.0 * c.kappa) / d,
        reb_on_qi: f.f2 / d,
        reb_on_eta: f.f3 / d,
        reb_on_y: f.f0 / d,
        trk_on_eta: f.fb3 / d,
        trk_on_w: (f.fb5 + 2.0 * c.kappa) / d,
        trk_on_asigma: f.fb4 / d,
    }
}

pub fn drift(c: &Node) -> DriftLoadings {
    let (k, g, db, n) = (c.kappa, c.gamma, c.db, c.n());
    DriftLoadings {
        trk_on_eta: g * db / n,
        trk_on_w: -2.0 * c.m_bar * k / n,
        trk_on_asigma: (g * (c.a - c.m + 1.0) * db - 2.0 * k) / n,
        reb_on_eta: g * db / n,
        reb_on_y: -2.0 * c.m_bar * k / n,
        reb_on_aiq: -g * db,
    }
}

/// `f`-perceived drift mapped to `dw°` against the `fbar`-perceived drift, at equilibrium holdings.
pub fn drift_matching(c: &Node, f: &PiPerception, h: &HoldingLoadings, s: &MarketState) -> Residual {
    let y = s.y(c);
    let th_i = h.rebalancer(s.ai, s.qi, s.eta, y);
    let th_j = h.tracker(s.eta, s.w, s.a_sigma);
    let x = s.a_sigma - s.ai;
    let lhs = [f.f0 * y, f.f1 * s.ai, f.f2 * s.qi, f.f3 * s.eta, c.alpha * th_i, -c.db * c.gamma * (x - s.qi)];
    let rhs = [f.fb3 * s.eta, f.fb4 * s.a_sigma, f.fb5 * s.w, c.alpha * th_j];
    residual(&lhs, &rhs)
}

/// Perceived drift at `theta` against equilibrium drift plus `alpha (theta - theta_hat)`; rebalancer then tracker.
pub fn perceived_drift_decomposition(
    c: &Node,
    f: &PiPerception,
    h: &HoldingLoadings,
    d: &DriftLoadings,
    s: &MarketState,
    theta_i: f64,
    theta_j: f64,
) -> (Residual, Residual) {
    let y = s.y(c);
    let hat_i = h.rebalancer(s.ai, s.qi, s.eta, y);
    let hat_j = h.tracker(s.eta, s.w, s.a_sigma);
    let ri =
        residual(&[f.f0 * y, f.f1 * s.ai, f.f2 * s.qi, f.f3 * s.eta, c.alpha * theta_i], &[d.rebalancer(s.ai, s.qi, s.eta, y), c.alpha * (theta_i - hat_i)]);
    let rj = residual(&[f.fb3 * s.eta, f.fb4 * s.a_sigma, f.fb5 * s.w, c.alpha * theta_j], &[d.tracker(s.eta, s.w, s.a_sigma), c.alpha * (theta_j - hat_j)]);
    (ri, rj)
}
