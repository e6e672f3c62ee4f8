//! Subgame perfect Nash equilibrium: off-equilibrium perceptions, responses, holdings and drifts.
//!
//! Long quotients are split into the shared denominators `D1`, `D2` and `E`.

use super::{quot, residual, CoeffError, DriftLoadings, HoldingLoadings, MarketState, Node, Residual};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NashPerception {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mub4: f64,
    pub mub5: f64,
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nub3: f64,
    pub nub4: f64,
    pub nub5: f64,
}

impl NashPerception {
    pub const NAMES: [&'static str; 12] = ["mu1", "mu2", "mu3", "mubar4", "mubar5", "nu0", "nu1", "nu2", "nu3", "nubar3", "nubar4", "nubar5"];

    pub fn values(&self) -> [f64; 12] {
        [self.mu1, self.mu2, self.mu3, self.mub4, self.mub5, self.nu0, self.nu1, self.nu2, self.nu3, self.nub3, self.nub4, self.nub5]
    }
}

/// Shared denominators, each negative for admissible parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dens {
    n: f64,
    d1: f64,
    d2: f64,
    e: f64,
}

fn dens(c: &Node) -> Result<Dens, CoeffError> {
    let (m, mb, al, k) = (c.m, c.m_bar, c.alpha, c.kappa);
    let n = m + mb;
    let d1 = al * n - 2.0 * (n - 1.0) * k;
    let d2a = al * ((3.0 * m - 1.0) * mb * mb + m * (3.0 * m - 2.0) * mb + (m - 2.0) * m * (m + 1.0) + mb * mb * mb);
    let d2k = -2.0 * ((n - 2.0) * n * n + mb) * k;
    let d2 = d2a + d2k;
    let e = al * (n + 1.0) - 2.0 * n * k;
    quot(1.0, d1, al.abs() * n + 2.0 * (n - 1.0) * k, c.t, "D1")?;
    quot(1.0, d2, d2a.abs() + d2k.abs(), c.t, "D2")?;
    if !(n > 2.0) {
        return Err(CoeffError::DenominatorVanishes { t: c.t, formula: "M + Mbar - 2" });
    }
    Ok(Dens { n, d1, d2, e })
}

pub fn perception(c: &Node) -> Result<NashPerception, CoeffError> {
    let Dens { n, d1, d2, .. } = dens(c)?;
    let (m, mb, a, k, g, db, af) = (c.m, c.m_bar, c.alpha, c.kappa, c.gamma, c.db, c.a);
    let amk = a - k;
    let mub4 = {
        let inner_a = a * (-2.0 * af + (n - 1.0) * n * n - 2.0);
        let inner_k = -2.0 * k * (-af + (3.0 * m - 2.0) * mb * mb + m * (3.0 * m - 4.0) * mb + (m - 1.0) * (m - 1.0) * m + mb * mb * mb + mb - 1.0);
        -(2.0 * (n - 2.0) * amk * (g * db * (inner_a + inner_k) + 4.0 * k * amk)) / (d1 * d2)
    };
    let mub5 = {
        let pa = m * m * (3.0 * mb - 5.0) + m * m * m + m * (mb * (3.0 * mb - 10.0) + 6.0) + (mb - 4.0) * (mb - 1.0) * mb;
        let pk = 2.0 * (m * m + 2.0 * m * (mb - 1.0) + (mb - 1.0) * mb) * k;
        2.0 * k * (a * pa + pk) / d2
    };
    let nub4 = {
        let inner_a = a * (-af * (n + 2.0) + (n - 1.0) * (m * m + 2.0 * m * mb + m + mb * mb) - mb - 2.0);
        let inner_k = 2.0 * k * (af * n + m * m * (1.0 - 3.0 * mb) - m * m * m - 3.0 * m * (mb - 1.0) * mb + m - (mb - 2.0) * mb * mb);
        -(2.0 * (n - 2.0) * amk * (g * db * (inner_a + inner_k) + 2.0 * k * (a * (n + 2.0) - 2.0 * n * k))) / (d1 * d2)
    };
    Ok(NashPerception {
        mu1: (2.0 * g * (n - 2.0) * db * (k - a) + 2.0 * k * (a * (n - 4.0) + 2.0 * k)) / d1,
        mu2: -2.0 * g * (n - 2.0) * db * amk / d1,
        mu3: -(4.0 * g * (n - 2.0) * db * amk * amk) / (d1 * d2),
        mub4,
        mub5,
        nu0: 1.0 + 1.0 / (n - 2.0),
        nu1: (2.0 * a * (n - 2.0) * k - 2.0 * g * (n - 1.0) * db * amk) / d1,
        nu2: -2.0 * g * (n - 1.0) * db * amk / d1,
        nu3: -(n - 1.0) * 4.0 * g * db * amk * amk / (d1 * d2),
        nub3: 2.0 * g * (n - 2.0) * db * amk / d2,
        nub4,
        nub5: 2.0 * (n - 1.0) * k * (a * (m * m + 2.0 * m * (mb - 1.0) + (mb - 4.0) * mb) + 2.0 * mb * k) / d2,
    })
}

/// Equilibrium holdings as displayed.
pub fn holdings(c: &Node) -> Result<HoldingLoadings, CoeffError> {
    let Dens { n, d1, d2, e } = dens(c)?;
    let (m, mb, k, g, db) = (c.m, c.m_bar, c.kappa, c.gamma, c.db);
    Ok(HoldingLoadings {
        reb_on_ai: -(n - 2.0) * (2.0 * k - g * db) / d1,
        reb_on_qi: g * (n - 2.0) * db / d1,
        reb_on_eta: -g * (n - 2.0) * (n - 2.0) * db * e / (d1 * d2),
        reb_on_y: 2.0 * mb * (n - 2.0) * (n - 1.0) * k / d2,
        trk_on_eta: -g * (n - 2.0) * (n - 1.0) * db / d2,
        trk_on_w: -2.0 * m * (n - 2.0) * (n - 1.0) * k / d2,
        trk_on_asigma: (n - 2.0) * (n - 1.0) * (g * (-c.a + m - 1.0) * db + 2.0 * k) / d2,
    })
}

/// Holdings as maximizers of the perceived market-clearing dynamics, built from `mu` and `nu`.
pub fn holdings_from_maximizers(c: &Node) -> Result<HoldingLoadings, CoeffError> {
    let p = perception(c)?;
    let (n, k, al, m, mb) = (c.n(), c.kappa, c.alpha, c.m, c.m_bar);
    let l = 2.0 * (k - al) * (n + 2.0 * p.nu0 - 1.0);
    let lj = 2.0 * (n + 1.0) * (k - al);
    Ok(HoldingLoadings {
        reb_on_ai: (2.0 * k * (n + p.nu0 - 1.0) + (n - 1.0) * p.nu1 + p.mu1 * p.nu0) / l,
        reb_on_qi: ((n - 1.0) * p.nu2 + p.mu2 * p.nu0) / l,
        reb_on_eta: -(p.nu0 * ((m - 1.0) * p.mu3 + p.mu2) - (n - 1.0) * p.nu3) / l,
        reb_on_y: -mb * p.nu0 * (2.0 * k + p.mub5) / l,
        trk_on_eta: ((n - 1.0) * p.nub3 - m * p.mu3 - p.mu2) / lj,
        trk_on_w: ((n - 1.0) * p.nub5 + 2.0 * m * k - (mb - 1.0) * p.mub5) / lj,
        trk_on_asigma: -(c.a * p.mu2 - (n - 1.0) * p.nub4 + (mb - 1.0) * p.mub4 + 2.0 * k + p.mu1) / lj,
    })
}

pub fn drift(c: &Node) -> Result<DriftLoadings, CoeffError> {
    let Dens { n, d1, d2, e } = dens(c)?;
    let (m, mb, k, g, db) = (c.m, c.m_bar, c.kappa, c.gamma, c.db);
    let eta = g * (n - 2.0) * db * e / d2;
    let w = -2.0 * mb * (n - 1.0) * k * d1 / d2;
    Ok(DriftLoadings {
        trk_on_eta: eta,
        trk_on_w: w,
        trk_on_asigma: -(n - 2.0) * e * (g * (-c.a + m - 1.0) * db + 2.0 * k) / d2,
        reb_on_eta: eta,
        reb_on_y: w,
        reb_on_aiq: -g * db,
    })
}

/// `B` implied by the perception coefficients; equals the curve `B` at every node.
pub fn mixing_fixed_point(c: &Node, p: &NashPerception) -> f64 {
    -(c.a * p.mu2 + c.m_bar * p.mub4 + 2.0 * c.kappa + p.mu1) / (2.0 * c.m_bar * c.kappa + c.m_bar * p.mub5)
}

/// Market-clearing `Z` when rebalancer `i0` holds `theta` with own state `(ai, qi)`.
pub fn z_rebalancer_deviation(c: &Node, p: &NashPerception, theta: f64, ai: f64, qi: f64, eta: f64, y: f64) -> f64 {
    let (n, k, al, m, mb) = (c.n(), c.kappa, c.alpha, c.m, c.m_bar);
    (2.0 * (al - k) * theta + (2.0 * k + p.mu1) * ai + p.mu2 * qi - ((m - 1.0) * p.mu3 + p.mu2) * eta - mb * (2.0 * k + p.mub5) * y) / (n - 1.0)
}

/// Market-clearing `Z` when tracker `j0` holds `theta`.
pub fn z_tracker_deviation(c: &Node, p: &NashPerception, theta: f64, eta: f64, w: f64, a_sigma: f64) -> f64 {
    let (n, k, al, m, mb) = (c.n(), c.kappa, c.alpha, c.m, c.m_bar);
    (2.0 * (al - k) * theta - (m * p.mu3 + p.mu2) * eta - (mb - 1.0) * (2.0 * k + p.mub5) * w - (c.a * p.mu2 + (mb - 1.0) * p.mub4 + 2.0 * k + p.mu1) * a_sigma)
        / (n - 1.0)
}

/// Optimal response of a non-deviating rebalancer to `z`.
pub fn response_rebalancer(c: &Node, p: &NashPerception, z: f64, ai: f64, qi: f64, eta: f64) -> f64 {
    (z + (2.0 * c.kappa + p.mu1) * ai + p.mu2 * qi + p.mu3 * eta) / (2.0 * (c.kappa - c.alpha))
}

/// Optimal response of a non-deviating tracker to `z`.
pub fn response_tracker(c: &Node, p: &NashPerception, z: f64, w: f64, a_sigma: f64) -> f64 {
    (z + (2.0 * c.kappa + p.mub5) * w + p.mub4 * a_sigma) / (2.0 * (c.kappa - c.alpha))
}

/// Rebalancer-side perceived drift mapped to `dw°` against the tracker side, both at equilibrium.
///
/// The tracker side carries its own market-clearing `Z*_j`.
pub fn drift_matching(c: &Node, p: &NashPerception, h: &HoldingLoadings, s: &MarketState) -> Residual {
    let y = s.y(c);
    let th_i = h.rebalancer(s.ai, s.qi, s.eta, y);
    let th_j = h.tracker(s.eta, s.w, s.a_sigma);
    let zi = z_rebalancer_deviation(c, p, th_i, s.ai, s.qi, s.eta, y);
    let zj = z_tracker_deviation(c, p, th_j, s.eta, s.w, s.a_sigma);
    let x = s.a_sigma - s.ai;
    let lhs = [p.nu0 * zi, p.nu1 * s.ai, p.nu2 * s.qi, p.nu3 * s.eta, c.alpha * th_i, -c.db * c.gamma * (x - s.qi)];
    let rhs = [zj, p.nub3 * s.eta, p.nub4 * s.a_sigma, p.nub5 * s.w, c.alpha * th_j];
    residual(&lhs, &rhs)
}

/// Who deviates in a consistency or decomposition check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Deviator {
    /// A rebalancer with its own `(a_i, q_i)`.
    Rebalancer {
        ai: f64,
        qi: f64,
    },
    Tracker,
}

/// Responses of a rebalancer with state `s` and of a tracker when the deviator holds `theta`.
pub fn responses(c: &Node, p: &NashPerception, s: &MarketState, who: Deviator, theta: f64) -> (f64, f64) {
    let y = s.y(c);
    let z = match who {
        Deviator::Rebalancer { ai, qi } => z_rebalancer_deviation(c, p, theta, ai, qi, s.eta, y),
        Deviator::Tracker => z_tracker_deviation(c, p, theta, s.eta, s.w, s.a_sigma),
    };
    (response_rebalancer(c, p, z, s.ai, s.qi, s.eta), response_tracker(c, p, z, s.w, s.a_sigma))
}

/// Residuals of `responses - (theta* - (theta - theta*_dev) / (M + Mbar - 1))` for both responders.
///
/// With `theta = theta*_dev` this is the consistency requirement.
pub fn response_decomposition(c: &Node, p: &NashPerception, h: &HoldingLoadings, s: &MarketState, who: Deviator, theta: f64) -> (Residual, Residual) {
    let y = s.y(c);
    let star_dev = match who {
        Deviator::Rebalancer { ai, qi } => h.rebalancer(ai, qi, s.eta, y),
        Deviator::Tracker => h.tracker(s.eta, s.w, s.a_sigma),
    };
    let (ri, rj) = responses(c, p, s, who, theta);
    let shift = (theta - star_dev) / (c.n() - 1.0);
    let star_i = h.rebalancer(s.ai, s.qi, s.eta, y);
    let star_j = h.tracker(s.eta, s.w, s.a_sigma);
    // `shift` cancels at theta = theta*_dev, so the scale keeps the sizes it came from.
    let spread = (theta.abs() + star_dev.abs()) / (c.n() - 1.0);
    let widen = |r: Residual| Residual { diff: r.diff, scale: r.scale + spread };
    (widen(residual(&[ri], &[star_i, -shift])), widen(residual(&[rj], &[star_j, -shift])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EquilibriumKind, ModelParams, TimeGrid};
    use crate::ode::solve_curves;
    use alloc::vec::Vec;

    fn nodes(p: &ModelParams) -> Vec<Node> {
        let c = solve_curves(p, EquilibriumKind::Nash, TimeGrid::new(40)).unwrap();
        (0..c.len()).map(|k| Node::at(&c, p, k)).collect()
    }

    fn params() -> Vec<ModelParams> {
        let mut out = Vec::new();
        for (m, mb, alpha) in [(5, 10, 0.0), (5, 10, -1.0), (1, 2, -0.3), (3, 1, -0.05), (8, 3, -2.0)] {
            let mut p = ModelParams::figure_base(0.7, 0.6);
            p.m_rebalancers = m;
            p.m_trackers = mb;
            p.alpha = alpha;
            out.push(p);
        }
        out
    }

    const STATES: [MarketState; 3] = [
        MarketState { ai: 0.3, qi: -1.1, eta: 0.7, a_sigma: 2.0, w: -0.4 },
        MarketState { ai: -2.0, qi: 0.5, eta: -3.0, a_sigma: 0.1, w: 1.6 },
        MarketState { ai: 1.0, qi: 0.0, eta: 0.0, a_sigma: 0.0, w: 0.0 },
    ];

    #[test]
    fn nu0_constant_and_alpha_zero_nu1() {
        let p = ModelParams::figure_base(1.0, 1.0);
        for c in nodes(&p) {
            let nu = perception(&c).unwrap();
            assert!((nu.nu0 - 14.0 / 13.0).abs() < 1e-15);
            assert!((nu.nu1 + c.gamma * c.db).abs() < 1e-14);
        }
    }

    #[test]
    fn two_holding_forms_agree() {
        for p in params() {
            for c in nodes(&p) {
                let a = holdings(&c).unwrap().values();
                let b = holdings_from_maximizers(&c).unwrap().values();
                for i in 0..7 {
                    assert!((a[i] - b[i]).abs() < 1e-12 * a[i].abs().max(1.0), "{}", HoldingLoadings::NAMES[i]);
                }
            }
        }
    }

    #[test]
    fn b_is_the_perception_fixed_point() {
        for p in params() {
            for c in nodes(&p) {
                let nu = perception(&c).unwrap();
                assert!((mixing_fixed_point(&c, &nu) - c.b).abs() < 1e-11 * c.b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn drift_matching_holds_with_tracker_z() {
        for p in params() {
            for c in nodes(&p) {
                let nu = perception(&c).unwrap();
                let h = holdings(&c).unwrap();
                let d = drift(&c).unwrap();
                for s in &STATES {
                    assert!(drift_matching(&c, &nu, &h, s).relative() < 1e-12);
                    // Left side equals the tracker-frame drift.
                    let y = s.y(&c);
                    let th = h.rebalancer(s.ai, s.qi, s.eta, y);
                    let zi = z_rebalancer_deviation(&c, &nu, th, s.ai, s.qi, s.eta, y);
                    let lhs = nu.nu0 * zi + nu.nu1 * s.ai + nu.nu2 * s.qi + nu.nu3 * s.eta + c.alpha * th - c.db * c.gamma * (s.a_sigma - s.ai - s.qi);
                    assert!((lhs - d.tracker(s.eta, s.w, s.a_sigma)).abs() < 1e-12 * (1.0 + lhs.abs()));
                }
            }
        }
    }

    #[test]
    fn consistency_and_response_decomposition() {
        for p in params() {
            for c in nodes(&p) {
                let nu = perception(&c).unwrap();
                let h = holdings(&c).unwrap();
                for s in &STATES {
                    for who in [Deviator::Rebalancer { ai: -0.8, qi: 0.25 }, Deviator::Tracker] {
                        let star = match who {
                            Deviator::Rebalancer { ai, qi } => h.rebalancer(ai, qi, s.eta, s.y(&c)),
                            Deviator::Tracker => h.tracker(s.eta, s.w, s.a_sigma),
                        };
                        for theta in [star, star + 1.7, star - 0.4] {
                            let (ri, rj) = response_decomposition(&c, &nu, &h, s, who, theta);
                            assert!(ri.relative() < 1e-12 && rj.relative() < 1e-12, "{who:?} {ri:?} {rj:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frame_identity_for_nash_drifts() {
        for p in params() {
            for c in nodes(&p) {
                let d = drift(&c).unwrap();
                for s in &STATES {
                    assert!(crate::coeffs::frame_equivalence(&c, &d, s).relative() < 1e-12);
                }
            }
        }
    }
}
