//! Exogenous parameterization and time discretization.

use alloc::vec::Vec;
use core::fmt;

/// Which equilibrium notion the curves and coefficients belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    /// Exogenous drift-impact coefficient `alpha`.
    PriceImpact,
    /// Subgame perfect Nash; impact is endogenous through other traders' responses.
    Nash,
}

impl EquilibriumKind {
    pub const ALL: [EquilibriumKind; 2] = [EquilibriumKind::PriceImpact, EquilibriumKind::Nash];

    pub fn slug(self) -> &'static str {
        match self {
            EquilibriumKind::PriceImpact => "price-impact",
            EquilibriumKind::Nash => "nash",
        }
    }
}

impl fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Target-penalty severity `kappa(t)` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum PenaltySpec {
    Constant(f64),
    /// `c0 + c1 * t`
    Affine {
        c0: f64,
        c1: f64,
    },
    /// Piecewise-linear through `(t, kappa)` nodes; first node at 0, last at 1, strictly increasing t.
    Tabulated(Vec<(f64, f64)>),
}

/// `t` lies outside `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutOfDomain(pub f64);

impl fmt::Display for OutOfDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "time {} is outside [0, 1]", self.0)
    }
}

impl core::error::Error for OutOfDomain {}

impl PenaltySpec {
    /// Evaluation without the domain guard. Callers must stay inside `[0, 1]`.
    pub(crate) fn at(&self, t: f64) -> f64 {
        match self {
            PenaltySpec::Constant(c) => *c,
            PenaltySpec::Affine { c0, c1 } => c0 + c1 * t,
            PenaltySpec::Tabulated(nodes) => {
                let k = nodes.partition_point(|&(tk, _)| tk <= t);
                if k == 0 {
                    return nodes[0].1;
                }
                if k == nodes.len() {
                    return nodes[nodes.len() - 1].1;
                }
                let (t0, v0) = nodes[k - 1];
                let (t1, v1) = nodes[k];
                if t == t0 {
                    return v0;
                }
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Smallest value on `[0, 1]`. Exact because every kind is piecewise linear.
    pub fn min_value(&self) -> f64 {
        match self {
            PenaltySpec::Constant(c) => *c,
            PenaltySpec::Affine { c0, c1 } => c0.min(c0 + c1),
            PenaltySpec::Tabulated(nodes) => nodes.iter().map(|n| n.1).fold(f64::INFINITY, f64::min),
        }
    }

    fn structural_error(&self) -> Option<&'static str> {
        match self {
            PenaltySpec::Constant(c) if !c.is_finite() => Some("constant kappa is not finite"),
            PenaltySpec::Affine { c0, c1 } if !(c0.is_finite() && c1.is_finite()) => Some("affine kappa coefficients are not finite"),
            PenaltySpec::Tabulated(nodes) => {
                if nodes.len() < 2 {
                    return Some("tabulated kappa needs at least two nodes");
                }
                if nodes[0].0 != 0.0 || nodes[nodes.len() - 1].0 != 1.0 {
                    return Some("tabulated kappa must span exactly [0, 1]");
                }
                if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Some("tabulated kappa times must be strictly increasing");
                }
                if nodes.iter().any(|n| !n.1.is_finite()) {
                    return Some("tabulated kappa values are not finite");
                }
                None
            }
            _ => None,
        }
    }
}

/// `kappa(t)`, strictly positive on validated specs.
pub fn kappa_eval(spec: &PenaltySpec, t: f64) -> Result<f64, OutOfDomain> {
    if !(0.0..=1.0).contains(&t) {
        return Err(OutOfDomain(t));
    }
    Ok(spec.at(t))
}

/// Uniform grid `t_k = k / n_steps` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TimeGrid {
    pub n_steps: usize,
}

impl TimeGrid {
    pub const DEFAULT_STEPS: usize = 2000;

    /// Panics on zero steps, which has no meaningful grid.
    pub fn new(n_steps: usize) -> Self {
        assert!(n_steps >= 1, "a time grid needs at least one step");
        TimeGrid { n_steps }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            1.0
        } else {
            k as f64 / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.t(k))
    }

    /// Node index for `t`, if `t` is a node up to rounding.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let x = t * self.n_steps as f64;
        let k = libm::round(x);
        if k < 0.0 || k > self.n_steps as f64 || (x - k).abs() > 1e-9 {
            return None;
        }
        Some(k as usize)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::new(Self::DEFAULT_STEPS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub m_rebalancers: usize,
    pub m_trackers: usize,
    pub sigma_a: f64,
    pub sigma_w0: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub b0: f64,
    pub kappa: PenaltySpec,
}

/// One violated constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamError {
    NoRebalancers,
    NoTrackers,
    NashSizeTooSmall { m: usize, m_bar: usize },
    PositiveAlpha(f64),
    NonpositiveGamma(f64),
    NonpositiveSigmaA(f64),
    NegativeSigmaW0(f64),
    NonfiniteB0(f64),
    NonpositiveKappa(f64),
    MalformedKappa(&'static str),
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::NoRebalancers => write!(f, "M must be at least 1"),
            ParamError::NoTrackers => write!(f, "Mbar must be at least 1"),
            ParamError::NashSizeTooSmall { m, m_bar } => {
                write!(f, "Nash kind needs M + Mbar > 2, got {m} + {m_bar}")
            }
            ParamError::PositiveAlpha(a) => write!(f, "alpha must be <= 0, got {a}"),
            ParamError::NonpositiveGamma(g) => write!(f, "gamma must be > 0, got {g}"),
            ParamError::NonpositiveSigmaA(s) => write!(f, "sigma_a must be > 0, got {s}"),
            ParamError::NegativeSigmaW0(s) => write!(f, "sigma_w0 must be >= 0, got {s}"),
            ParamError::NonfiniteB0(b) => write!(f, "B0 must be finite, got {b}"),
            ParamError::NonpositiveKappa(k) => write!(f, "kappa must be > 0 on [0, 1], minimum is {k}"),
            ParamError::MalformedKappa(why) => write!(f, "{why}"),
        }
    }
}

impl core::error::Error for ParamError {}

/// Every violated constraint, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamErrors(pub Vec<ParamError>);

impl ParamErrors {
    pub fn contains(&self, probe: impl Fn(&ParamError) -> bool) -> bool {
        self.0.iter().any(probe)
    }
}

impl fmt::Display for ParamErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ParamErrors {}

impl ModelParams {
    /// Caption parameterization shared by Figs. 1 through 4.
    pub fn figure_base(gamma: f64, sigma_w0: f64) -> Self {
        ModelParams { m_rebalancers: 5, m_trackers: 10, sigma_a: 1.0, sigma_w0, gamma, alpha: 0.0, b0: -0.2, kappa: PenaltySpec::Constant(1.0) }
    }

    /// Caption parameterization of the value-function figure.
    pub fn value_figure(gamma: f64, sigma_w0: f64) -> Self {
        ModelParams { m_rebalancers: 10, m_trackers: 10, sigma_a: 1.0, sigma_w0, gamma, alpha: -0.1, b0: -1.0, kappa: PenaltySpec::Constant(1.0) }
    }

    pub fn m(&self) -> f64 {
        self.m_rebalancers as f64
    }

    pub fn m_bar(&self) -> f64 {
        self.m_trackers as f64
    }

    /// `M + Mbar`
    pub fn n_total(&self) -> f64 {
        (self.m_rebalancers + self.m_trackers) as f64
    }

    /// `sigma_w0^2 + (M-1) B0^2 sigma_a^2`, the variance of `Y_{i,0}`.
    pub fn d0(&self) -> f64 {
        let s2 = self.sigma_a * self.sigma_a;
        self.sigma_w0 * self.sigma_w0 + (self.m() - 1.0) * self.b0 * self.b0 * s2
    }

    /// `(M-1) B0 sigma_a^2 / D0`, so that `q_{i,0} = -k0 Y_{i,0}`.
    pub fn filter_gain0(&self) -> f64 {
        (self.m() - 1.0) * self.b0 * self.sigma_a * self.sigma_a / self.d0()
    }

    /// `(M-1) B0^2 sigma_a^2 / D0 = -A(0)`.
    pub fn c0(&self) -> f64 {
        self.filter_gain0() * self.b0
    }

    pub fn validate(&self, kind: EquilibriumKind) -> Result<(), ParamErrors> {
        let mut errs = Vec::new();
        if self.m_rebalancers < 1 {
            errs.push(ParamError::NoRebalancers);
        }
        if self.m_trackers < 1 {
            errs.push(ParamError::NoTrackers);
        }
        if kind == EquilibriumKind::Nash && self.m_rebalancers + self.m_trackers <= 2 {
            errs.push(ParamError::NashSizeTooSmall { m: self.m_rebalancers, m_bar: self.m_trackers });
        }
        if !(self.alpha <= 0.0) {
            errs.push(ParamError::PositiveAlpha(self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            errs.push(ParamError::NonpositiveGamma(self.gamma));
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            errs.push(ParamError::NonpositiveSigmaA(self.sigma_a));
        }
        if !(self.sigma_w0 >= 0.0 && self.sigma_w0.is_finite()) {
            errs.push(ParamError::NegativeSigmaW0(self.sigma_w0));
        }
        if !self.b0.is_finite() {
            errs.push(ParamError::NonfiniteB0(self.b0));
        }
        match self.kappa.structural_error() {
            Some(why) => errs.push(ParamError::MalformedKappa(why)),
            None => {
                let lo = self.kappa.min_value();
                if !(lo > 0.0) {
                    errs.push(ParamError::NonpositiveKappa(lo));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ParamErrors(errs))
        }
    }
}

/// Returns `params` unchanged when every invariant holds.
pub fn validate_params(params: &ModelParams, kind: EquilibriumKind) -> Result<&ModelParams, ParamErrors> {
    params.validate(kind).map(|()| params)
}
