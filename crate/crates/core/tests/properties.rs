use ldm_core::coeffs::nash::{self, Deviator};
use ldm_core::coeffs::{drift_matching, frame_equivalence, holdings_at, node_coeffs, pi, MarketState, Node};
use ldm_core::{kappa_eval, solve_curves, solve_resolved, validate_params, EquilibriumCurves, EquilibriumKind, ModelParams, PenaltySpec, TimeGrid};
use proptest::prelude::*;

fn params(kind: EquilibriumKind) -> impl Strategy<Value = ModelParams> {
    (1usize..=12, 1usize..=15, 0.2f64..2.0, 0.0f64..2.0, 0.2f64..2.0, -2.0f64..=0.0, -2.0f64..0.5, 0.2f64..3.0)
        .prop_filter("Nash needs M + Mbar > 2", move |(m, mb, ..)| kind == EquilibriumKind::PriceImpact || m + mb > 2)
        .prop_filter("the initial filter needs sigma_w0 or (M - 1) B0^2", |(m, _, _, sw, _, _, b0, _)| *sw > 1e-3 || (*m > 1 && b0.abs() > 1e-3))
        .prop_map(|(m, mb, sa, sw, g, al, b0, k)| ModelParams {
            m_rebalancers: m,
            m_trackers: mb,
            sigma_a: sa,
            sigma_w0: sw,
            gamma: g,
            alpha: al,
            b0,
            kappa: PenaltySpec::Constant(k),
        })
}

fn state() -> impl Strategy<Value = MarketState> {
    (-3.0f64..3.0, -3.0f64..3.0, -5.0f64..5.0, -8.0f64..8.0, -4.0f64..4.0).prop_map(|(ai, qi, eta, a_sigma, w)| MarketState { ai, qi, eta, a_sigma, w })
}

/// Coarsest doubling of 400 steps that agrees with its own doubling to 1e-6. Corners of the
/// parameter box with large kappa / gamma need tens of thousands of fixed RK4 steps.
fn resolved(p: &ModelParams, kind: EquilibriumKind) -> Result<EquilibriumCurves, TestCaseError> {
    match solve_resolved(p, kind, TimeGrid::new(400), 1e-6) {
        Ok(Some(c)) => Ok(c),
        Ok(None) => Err(TestCaseError::fail(format!("{p:?}: no grid resolves the curves"))),
        Err(e) => Err(TestCaseError::fail(format!("{e}"))),
    }
}

fn check_curves(p: &ModelParams, kind: EquilibriumKind) -> Result<(), TestCaseError> {
    let c = resolved(p, kind)?;
    let bad = c.invariant_violations(p, 1e-9);
    prop_assert!(bad.is_empty(), "{:?}: {:?}", p, bad);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn price_impact_curve_invariants(p in params(EquilibriumKind::PriceImpact)) {
        check_curves(&p, EquilibriumKind::PriceImpact)?;
    }

    #[test]
    fn nash_curve_invariants(p in params(EquilibriumKind::Nash)) {
        check_curves(&p, EquilibriumKind::Nash)?;
    }

    #[test]
    fn price_impact_curves_ignore_alpha(p in params(EquilibriumKind::PriceImpact), alpha in -3.0f64..0.0) {
        let a = solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(200)).unwrap();
        let mut q = p.clone();
        q.alpha = alpha;
        let b = solve_curves(&q, EquilibriumKind::PriceImpact, TimeGrid::new(200)).unwrap();
        prop_assert_eq!(&a.b, &b.b);
        prop_assert_eq!(&a.a, &b.a);
        prop_assert_eq!(&a.sigma_filt, &b.sigma_filt);
    }

    #[test]
    fn validation_is_idempotent(p in params(EquilibriumKind::Nash), m in 0usize..3) {
        let mut q = p.clone();
        q.m_rebalancers = m;
        for kind in EquilibriumKind::ALL {
            let first = validate_params(&q, kind).cloned();
            let second = validate_params(&q, kind).cloned();
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn tabulated_kappa_is_piecewise_linear(vals in proptest::collection::vec(0.1f64..5.0, 2..8), s in 0.0f64..1.0) {
        let n = vals.len() - 1;
        let nodes: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, v)| (i as f64 / n as f64, *v)).collect();
        let spec = PenaltySpec::Tabulated(nodes.clone());
        for (t, v) in &nodes {
            prop_assert_eq!(kappa_eval(&spec, *t).unwrap(), *v);
        }
        let seg = ((s * n as f64) as usize).min(n - 1);
        let (t0, v0) = nodes[seg];
        let (t1, v1) = nodes[seg + 1];
        let t = t0 + s * (t1 - t0);
        let lin = v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        prop_assert!((kappa_eval(&spec, t).unwrap() - lin).abs() < 1e-12);
    }
}

/// Random parameters, node and state, plus an off-equilibrium holding for the refinements.
fn refinement_case(kind: EquilibriumKind) -> impl Strategy<Value = (ModelParams, usize, MarketState, f64, f64, f64)> {
    (params(kind), 0usize..=40, state(), -6.0f64..6.0, -3.0f64..3.0, -3.0f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn price_impact_perceived_drift_decomposition((p, k, s, theta_i, theta_j, _) in refinement_case(EquilibriumKind::PriceImpact)) {
        let c = solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(40)).unwrap();
        let n = Node::at(&c, &p, k);
        let f = pi::perception(&n).unwrap();
        let (h, d) = (pi::holdings(&n), pi::drift(&n));
        let (ri, rj) = pi::perceived_drift_decomposition(&n, &f, &h, &d, &s, theta_i, theta_j);
        prop_assert!(ri.relative() < 1e-10 && rj.relative() < 1e-10, "{:?} {:?}", ri, rj);
    }

    #[test]
    fn nash_response_decomposition((p, k, s, dev, ai, qi) in refinement_case(EquilibriumKind::Nash)) {
        let c = solve_curves(&p, EquilibriumKind::Nash, TimeGrid::new(40)).unwrap();
        let n = Node::at(&c, &p, k);
        let nu = nash::perception(&n).unwrap();
        let h = nash::holdings(&n).unwrap();
        for who in [Deviator::Rebalancer { ai, qi }, Deviator::Tracker] {
            let star = match who {
                Deviator::Rebalancer { ai, qi } => h.rebalancer(ai, qi, s.eta, s.y(&n)),
                Deviator::Tracker => h.tracker(s.eta, s.w, s.a_sigma),
            };
            let (ri, rj) = nash::response_decomposition(&n, &nu, &h, &s, who, star + dev);
            prop_assert!(ri.relative() < 1e-10 && rj.relative() < 1e-10, "{:?} {:?} {:?}", who, ri, rj);
        }
    }

    #[test]
    fn drift_matching_and_frame_equivalence((p, k, s, ..) in refinement_case(EquilibriumKind::Nash)) {
        for kind in EquilibriumKind::ALL {
            let c = solve_curves(&p, kind, TimeGrid::new(40)).unwrap();
            let nc = node_coeffs(&c, &p, k).unwrap();
            prop_assert!(drift_matching(&nc, &s).relative() < 1e-10);
            prop_assert!(frame_equivalence(&nc.node, &nc.drift, &s).relative() < 1e-10);
        }
    }

    #[test]
    fn price_impact_sign_battery(p in params(EquilibriumKind::PriceImpact), k in 0usize..=400) {
        prop_assume!(p.m_bar() * p.b0 + 1.0 < 0.0);
        let c = resolved(&p, EquilibriumKind::PriceImpact)?;
        let node = k * c.grid.n_steps / 400;
        let h = holdings_at(EquilibriumKind::PriceImpact, &Node::at(&c, &p, node)).unwrap();
        prop_assert!(h.reb_on_y < 0.0 && h.reb_on_qi > 0.0 && h.trk_on_eta < 0.0, "{:?}", h);
    }
}

#[test]
fn nash_curves_depend_on_alpha() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let a = solve_curves(&p, EquilibriumKind::Nash, TimeGrid::new(200)).unwrap();
    let mut q = p.clone();
    q.alpha = -1.0;
    let b = solve_curves(&q, EquilibriumKind::Nash, TimeGrid::new(200)).unwrap();
    let gap = a.b.iter().zip(&b.b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap > 0.0);
}

#[test]
fn explicit_forms_converge_at_fourth_order() {
    let p = ModelParams::figure_base(1.0, 1.0);
    let r = |n| ldm_core::explicit_cross_checks(&solve_curves(&p, EquilibriumKind::PriceImpact, TimeGrid::new(n)).unwrap(), &p);
    let at_4000 = r(4000);
    assert!(at_4000.max() <= 1e-6, "{at_4000:?}");
    // Above a few hundred steps the residual is round-off, so the ratio is taken earlier.
    for n in [20, 40, 80] {
        let (bc, bf) = (r(n).b.unwrap(), r(2 * n).b.unwrap());
        assert!(bc / bf >= 8.0, "{n}: {bc} {bf}");
    }
}
