use super::*;
use crate::coeffs::{drift_at, HoldingsCoeffs};
use crate::model::{EquilibriumKind, TimeGrid};
use crate::ode::solve_curves;
use crate::sim::{simulate_paths, Market, SimConfig};
use alloc::vec;

const SETTINGS: [(f64, f64); 4] = [(0.5, 0.1), (0.5, 1.0), (1.0, 0.1), (1.0, 1.0)];

fn curves(p: &ModelParams, kind: EquilibriumKind, n: usize) -> EquilibriumCurves {
    solve_curves(p, kind, TimeGrid::new(n)).unwrap()
}

#[test]
fn basis_covariance_quadratures() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let c = curves(&p, EquilibriumKind::PriceImpact, 400);
    let cov = basis_covariance(&c, &p);
    assert_eq!(cov[0][3], [0.0; 5]);
    let (mut ig, mut ig2) = (0.0, 0.0);
    let h = c.grid.dt();
    for k in 0..400 {
        let (g0, g1) = (c.kernel(k), c.kernel(k + 1));
        ig += 0.5 * h * (g0 + g1);
        ig2 += 0.5 * h * (g0 * g0 + g1 * g1);
    }
    let last = &cov[400];
    assert!((last[3][3] - 1.0).abs() < 1e-15);
    assert!((last[3][4] - ig).abs() < 1e-5 * ig.abs());
    assert!((last[4][4] - ig2).abs() < 1e-5 * ig2);
    assert_eq!(last[1][1], 4.0);
    assert_eq!(last[0][1], 0.0);
    // Cauchy-Schwarz on (w°, R).
    assert!(last[3][4] * last[3][4] <= last[3][3] * last[4][4]);
}

#[test]
fn trading_autocorrelation_signs() {
    for (g, s) in SETTINGS {
        let p = ModelParams::figure_base(g, s);
        for kind in EquilibriumKind::ALL {
            let a = analytic_autocorrelations(&curves(&p, kind, 500), &p).unwrap();
            assert!(a.rho_reb.iter().all(|v| *v > 0.0), "{g} {s} {kind:?}");
            assert!(a.rho_trk.iter().all(|v| *v < 0.0), "{g} {s} {kind:?}");
        }
    }
}

#[test]
fn price_autocorrelation_and_drift_variance_rise() {
    for (g, s) in SETTINGS {
        let p = ModelParams::figure_base(g, s);
        let c = curves(&p, EquilibriumKind::PriceImpact, 500);
        let a = analytic_autocorrelations(&c, &p).unwrap();
        assert!(a.rho_price.windows(2).all(|w| w[1] > w[0]), "{g} {s}");
        let dv = drift_variance_curve(&c, &p).unwrap();
        assert!(dv.windows(2).all(|w| w[1] > w[0]), "{g} {s}");
    }
}

#[test]
fn drift_variance_at_open_by_hand() {
    let mut p = ModelParams::figure_base(1.0, 0.0);
    p.sigma_w0 = 0.0;
    let c = curves(&p, EquilibriumKind::PriceImpact, 100);
    let d = drift_at(EquilibriumKind::PriceImpact, &crate::coeffs::Node::at(&c, &p, 0)).unwrap();
    // w_0 = 0 and eta_0 = -M k0 Y_0 = M k0 B0 a_Sigma with k0 = 1 / B0.
    let load = d.trk_on_asigma + d.trk_on_eta * p.m();
    let hand = load * load * p.m() * p.sigma_a * p.sigma_a;
    let dv = drift_variance_curve(&c, &p).unwrap();
    assert!((dv[0] - hand).abs() < 1e-12 * hand.abs().max(1.0), "{} {hand}", dv[0]);
    // Without w° the open variance scales with sigma_a^2.
    p.sigma_a = 1e-6;
    let tiny = drift_variance_curve(&curves(&p, EquilibriumKind::PriceImpact, 100), &p).unwrap();
    assert!(tiny[0] < 1e-12);
}

#[test]
fn cross_correlation_is_minus_one() {
    for (g, s) in SETTINGS {
        let p = ModelParams::figure_base(g, s);
        for kind in EquilibriumKind::ALL {
            let c = curves(&p, kind, 200);
            for k in 0..=200 {
                let t = c.t(k);
                match instantaneous_cross_correlation(&c, &p, t) {
                    Ok(v) => assert_eq!(v, -1.0, "{g} {s} {kind:?} {t}"),
                    Err(AnalyticsError::ZeroDiffusion { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    assert_eq!(correlation_from_diffusions(0.0, 0.0, 0.3), Err(AnalyticsError::ZeroDiffusion { t: 0.3 }));
    assert_eq!(correlation_from_diffusions(0.2, 0.1, 0.3), Ok(1.0));
}

#[test]
fn analytic_diffusions_agree_with_state_space() {
    let p = ModelParams::figure_base(0.5, 1.0);
    for kind in EquilibriumKind::ALL {
        let c = curves(&p, kind, 100);
        let a = analytic_autocorrelations(&c, &p).unwrap();
        for k in [0, 37, 100] {
            let n = crate::coeffs::Node::at(&c, &p, k);
            let (r, j) = holding_diffusions(&crate::coeffs::holdings_at(kind, &n).unwrap(), &n);
            assert!((r - a.sigma_reb[k]).abs() < 1e-10, "{kind:?} {k}");
            assert!((j - a.sigma_trk[k]).abs() < 1e-10, "{kind:?} {k}");
        }
    }
}

#[test]
fn too_few_nodes() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let c = curves(&p, EquilibriumKind::PriceImpact, 3);
    assert_eq!(analytic_autocorrelations(&c, &p), Err(AnalyticsError::TooFewNodes(4)));
}

fn batch(p: &ModelParams, n: usize, paths: usize, seed: u64, strides: &[usize]) -> crate::sim::SimBatch {
    let c = curves(p, EquilibriumKind::PriceImpact, n);
    let mk = Market::new(p, Some(&c)).unwrap();
    let mut cfg = SimConfig::new(paths, seed);
    cfg.strides = strides.to_vec();
    simulate_paths(&mk, &cfg).unwrap()
}

type Pick = fn(&crate::coeffs::BasisLoadings) -> Basis;

/// Exact correlation of consecutive increments `theta_k - theta_{k-s}` and `theta_{k+s} - theta_k`
/// under the discrete exact-transition dynamics, where `R_j = sum_{l<j} g_l dw_l`.
struct DiscreteOracle {
    loads: Vec<crate::coeffs::BasisLoadings>,
    static_cov: Cov5,
    h: f64,
    cum_g: Vec<f64>,
    cum_g2: Vec<f64>,
}

impl DiscreteOracle {
    fn new(c: &EquilibriumCurves, p: &ModelParams) -> Self {
        let loads = crate::coeffs::basis_loadings(c, p).unwrap();
        let h = c.grid.dt();
        let (mut cum_g, mut cum_g2) = (vec![0.0], vec![0.0]);
        for k in 0..c.grid.n_steps {
            let g = c.kernel(k);
            cum_g.push(cum_g[k] + h * g);
            cum_g2.push(cum_g2[k] + h * g * g);
        }
        let mut static_cov = [[0.0; 5]; 5];
        static_cov[0][0] = p.sigma_a * p.sigma_a;
        static_cov[1][1] = (p.m() - 1.0) * p.sigma_a * p.sigma_a;
        static_cov[2][2] = p.sigma_w0 * p.sigma_w0;
        DiscreteOracle { loads, static_cov, h, cum_g, cum_g2 }
    }

    fn cross(&self, j: usize, m: usize) -> Cov5 {
        let mut c = self.static_cov;
        let lo = j.min(m);
        c[3][3] = self.h * lo as f64;
        c[3][4] = self.cum_g[lo];
        c[4][3] = self.cum_g[lo];
        c[4][4] = self.cum_g2[lo];
        c
    }

    fn cov(&self, pick: Pick, (a0, a1): (usize, usize), (b0, b1): (usize, usize)) -> f64 {
        let l = |k: usize| pick(&self.loads[k]);
        let e = |x: usize, y: usize| bilinear(&l(x), &self.cross(x, y), &l(y));
        e(a1, b1) - e(a1, b0) - e(a0, b1) + e(a0, b0)
    }

    fn corr(&self, pick: Pick, k: usize, s: usize) -> f64 {
        let (a, b) = ((k - s, k), (k, k + s));
        self.cov(pick, a, b) / libm::sqrt(self.cov(pick, a, a) * self.cov(pick, b, b))
    }

    /// Same Richardson combination as the estimator, labelled by the first increment start.
    fn scaled(&self, pick: Pick, j: usize, s: usize) -> f64 {
        let (h, hh) = (s as f64 * self.h, (s / 2) as f64 * self.h);
        2.0 * self.corr(pick, j + s / 2, s / 2) / hh - self.corr(pick, j + s, s) / h
    }
}

#[test]
fn discrete_oracle_converges_to_the_limit() {
    // The grid discretization biases the scaled correlation at O(dt), independent of the
    // bandwidth stride, so the limit is recovered by extrapolating across grids.
    let p = ModelParams::figure_base(0.5, 1.0);
    let scaled = |n: usize, t: f64| -> [f64; 2] {
        let c = curves(&p, EquilibriumKind::PriceImpact, n);
        let o = DiscreteOracle::new(&c, &p);
        let j = c.grid.node_of(t).unwrap();
        [o.scaled(|l| l.reb, j, 2), o.scaled(|l| l.trk, j, 2)]
    };
    let c = curves(&p, EquilibriumKind::PriceImpact, 2000);
    let a = analytic_autocorrelations(&c, &p).unwrap();
    for t in [0.05, 0.25, 0.5, 0.75] {
        let (f, g) = (scaled(2000, t), scaled(1000, t));
        let k = c.grid.node_of(t).unwrap();
        for (s, lim) in [a.rho_reb[k], a.rho_trk[k]].into_iter().enumerate() {
            let ext = 2.0 * f[s] - g[s];
            assert!((ext / lim - 1.0).abs() < 5e-3, "{t} {s} {ext} {lim} {f:?} {g:?}");
            assert!((f[s] - lim).abs() < (g[s] - lim).abs());
        }
    }
}

#[test]
fn simulated_autocorrelations_match_the_discrete_oracle() {
    let p = ModelParams::figure_base(0.5, 1.0);
    let c = curves(&p, EquilibriumKind::PriceImpact, 40);
    let mut cfg = SimConfig::new(20_000, 5);
    cfg.strides = vec![1, 2, 4];
    cfg.mode = crate::sim::StepMode::Exact;
    let b = simulate_paths(&Market::new(&p, Some(&c)).unwrap(), &cfg).unwrap();
    let o = DiscreteOracle::new(&c, &p);
    let picks: [(HolderSeries, Pick); 2] = [(HolderSeries::Rebalancer, |l| l.reb), (HolderSeries::Tracker, |l| l.trk)];
    for (series, pick) in picks {
        for stride in [2, 4] {
            let cur = trading_autocorrelation(&b, series, stride).unwrap();
            let z: Vec<f64> = (0..cur.len()).map(|j| (cur.estimate[j] - o.scaled(pick, j, stride)) / cur.se[j]).collect();
            let inside = z.iter().filter(|v| v.abs() < 3.0).count();
            assert!(inside as f64 >= 0.9 * z.len() as f64, "{series:?} {stride} {z:?}");
            let mean_z = z.iter().sum::<f64>() / z.len() as f64;
            assert!(mean_z.abs() < 1.5, "{series:?} {stride} {mean_z}");
        }
        // Halving the bandwidth moves the estimate by less than its confidence width.
        let (coarse, fine) = (trading_autocorrelation(&b, series, 4).unwrap(), trading_autocorrelation(&b, series, 2).unwrap());
        let stable = (0..coarse.len()).filter(|j| (fine.estimate[*j] - coarse.estimate[*j]).abs() < 2.0 * 1.96 * fine.se[*j]).count();
        assert!(stable as f64 >= 0.9 * coarse.len() as f64, "{series:?} {stable}");
    }
}

#[test]
fn bandwidth_errors() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let b = batch(&p, 20, 50, 1, &[1, 2]);
    assert_eq!(trading_autocorrelation(&b, HolderSeries::Rebalancer, 1), Err(AnalyticsError::BandwidthTooCoarse { stride: 1 }));
    assert_eq!(price_autocorrelation(&b, 4), Err(AnalyticsError::BandwidthTooCoarse { stride: 4 }));
    assert_eq!(cross_correlation_estimate(&b, 3), Err(AnalyticsError::BandwidthTooCoarse { stride: 3 }));
    assert!(price_autocorrelation(&b, 2).is_ok());
}

#[test]
fn constant_holdings_are_degenerate() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let c = curves(&p, EquilibriumKind::PriceImpact, 20);
    let zero = HoldingsCoeffs { kind: c.kind, nodes: vec![crate::coeffs::HoldingLoadings::from_values([0.0; 7]); c.len()] };
    let mk = Market::new(&p, Some(&c)).unwrap().with_holdings(&zero).unwrap();
    let b = simulate_paths(&mk, &SimConfig::new(40, 1)).unwrap();
    assert!(matches!(trading_autocorrelation(&b, HolderSeries::Tracker, 2), Err(AnalyticsError::DegenerateIncrements { .. })));
    assert!(matches!(cross_correlation_estimate(&b, 1), Err(AnalyticsError::DegenerateIncrements { .. })));
}

#[test]
fn brownian_price_has_no_autocorrelation() {
    let mut p = ModelParams::figure_base(100.0, 0.0);
    p.sigma_a = 1e-4;
    let b = batch(&p, 40, 5_000, 2, &[1, 2]);
    let cur = price_autocorrelation(&b, 2).unwrap();
    let n = cur.len() as f64;
    let mean = cur.estimate.iter().sum::<f64>() / n;
    let se = cur.se.iter().sum::<f64>() / n;
    assert!(mean.abs() < 3.0 * se, "{mean} {se}");
}

#[test]
fn simulated_cross_correlation_is_near_minus_one() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let b = batch(&p, 400, 2_000, 7, &[1]);
    let cur = cross_correlation_estimate(&b, 1).unwrap();
    assert!(!cur.scaled);
    assert!(cur.estimate.iter().all(|v| (-1.0..=1.0).contains(v)));
    let c = &b.curves;
    for (j, v) in cur.estimate.iter().enumerate() {
        let n = crate::coeffs::Node::at(c, &p, j);
        let (r, _) = holding_diffusions(&crate::coeffs::holdings_at(c.kind, &n).unwrap(), &n);
        if r.abs() > 0.05 {
            assert!((v + 1.0).abs() < 1e-2, "t = {} {v}", n.t);
        }
    }
}

fn value_setup(sigma_w0: f64, gamma: f64, n: usize) -> (ModelParams, EquilibriumCurves) {
    let p = ModelParams::value_figure(gamma, sigma_w0);
    let c = curves(&p, EquilibriumKind::PriceImpact, n);
    (p, c)
}

#[test]
fn value_function_shape_and_forms() {
    let (p, c) = value_setup(1.0, 1.0, 200);
    let grid = [-6.0, -3.0, 0.0, 3.0, 6.0];
    let s = value_function(&p, &c, &grid, &ValueOptions::new(4_000, 9)).unwrap();
    assert!(s.j[2] > 0.0, "{:?}", s.j);
    assert!(s.j[0] < 0.0 && s.j[4] < 0.0, "{:?}", s.j);
    for z in s.form_gap_z() {
        assert!(z < 3.0, "{z}");
    }
    // Even symmetry within sampling error.
    for (lo, hi) in [(0, 4), (1, 3)] {
        let se = libm::sqrt(s.j_se[lo] * s.j_se[lo] + s.j_se[hi] * s.j_se[hi]);
        assert!((s.j[lo] - s.j[hi]).abs() < 3.0 * se.max(1e-12));
    }
    // Left-point sums against Simpson quadrature differ at O(h).
    for k in 0..grid.len() {
        assert!((s.j[k] - s.j_gaussian[k]).abs() < 3.0 * s.j_se[k] + 0.02 * s.j_gaussian[k].abs().max(1.0), "{k} {} {}", s.j[k], s.j_gaussian[k]);
    }
    let e = s.eval_state[4];
    assert_eq!(e.y0, 6.0);
    assert_eq!(e.qi0, 0.0);
    let rc = s.rc.as_ref().unwrap();
    assert_eq!(rc.rc[2], 0.0);
    assert!(rc.rc.iter().all(|v| *v >= -1e-9));
    assert!(rc.fit.c2 > 0.0 && rc.fit.r_squared > 0.999);
}

#[test]
fn value_function_errors_and_determinism() {
    let (p, c) = value_setup(0.1, 0.5, 60);
    let opts = ValueOptions::new(600, 3);
    let s = value_function(&p, &c, &[1.0, 2.0], &opts).unwrap();
    assert!(s.rc.is_none());
    assert_eq!(rebalancing_cost(&s), Err(AnalyticsError::MissingBaseline));
    let again = value_function(&p, &c, &[1.0, 2.0], &opts).unwrap();
    assert_eq!(s, again);
    let mut tight = opts.clone();
    tight.se_ceiling = Some(1e-9);
    assert!(matches!(value_function(&p, &c, &[0.0], &tight), Err(AnalyticsError::InsufficientPaths { .. })));
    assert_eq!(value_function(&p, &c, &[0.0], &ValueOptions::new(1, 3)), Err(AnalyticsError::InvalidPathCount));
    let nash = curves(&p, EquilibriumKind::Nash, 60);
    assert!(matches!(value_function(&p, &nash, &[0.0], &opts), Err(AnalyticsError::Coeff(_))));
    let mut ext = opts.clone();
    ext.allow_nash = true;
    assert!(value_function(&p, &nash, &[0.0], &ext).is_ok());
}

#[test]
fn simulated_drift_variance_matches_quadrature() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let b = batch(&p, 100, 20_000, 4, &[1]);
    let dv = drift_variance_curve(&b.curves, &p).unwrap();
    let s = crate::sim::BatchSummary::series_index("trk_drift").unwrap();
    for k in [0, 25, 50, 100] {
        let (v, se) = b.summary.variance(s, k);
        assert!((v - dv[k]).abs() < 3.0 * se + 1e-2 * dv[k], "{k} {v} {} {se}", dv[k]);
    }
}

#[test]
fn grid_extrapolation_pairs_shared_times() {
    let coarse = CorrelationCurve { t: vec![0.0, 0.5, 1.0], estimate: vec![1.0, 2.0, 3.0], se: vec![0.1; 3], h: 0.5, scaled: true };
    let fine = CorrelationCurve { t: vec![0.0, 0.25, 0.5, 0.75], estimate: vec![1.5, 9.0, 2.5, 9.0], se: vec![0.1; 4], h: 0.25, scaled: true };
    let g = grid_extrapolate(&fine, &coarse);
    assert_eq!(g.t, vec![0.0, 0.5]);
    assert_eq!(g.estimate, vec![2.0, 3.0]);
    assert!((g.se[0] - libm::sqrt(0.05)).abs() < 1e-15);
}
