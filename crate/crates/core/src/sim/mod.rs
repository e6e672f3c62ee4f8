//! Per-path Monte Carlo of targets, tracker demand, public state, filters, holdings, price and wealth.
//!
//! Paths are simulated in fixed chunks of [`CHUNK`] paths. Chunk partials are merged in chunk
//! order, so the batch is bit-identical however the chunks are scheduled.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coeffs::{self, nash, node_coeffs, CoeffError, HoldingsCoeffs, MarketState, NodeCoeffs, Perception};
use crate::model::{EquilibriumKind, ModelParams};
use crate::ode::EquilibriumCurves;

mod batch;
pub mod filter;
mod identity;

pub use batch::{correlation, simulate_paths, BatchBuilder, BatchSummary, ChunkPartial, IncrementMoments, SimBatch, SERIES};
pub(crate) use batch::{CH_CROSS, CH_PRICE, CH_REB, CH_TRK};
pub use identity::{IdentityEntry, IdentityMax, IdentityReport, IdentityTolerances};

/// Paths per reduction chunk.
pub const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    InvalidPathCount,
    /// Curves, coefficient tables or grid disagree in length, or no curves were supplied.
    CurvesMissing,
    RetentionOverflow {
        required: usize,
        budget: usize,
    },
    Coeff(CoeffError),
    InsufficientPaths {
        worst_se: f64,
        ceiling: f64,
    },
    /// Checkpoint that is not a grid node.
    OffGrid(f64),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidPathCount => write!(f, "n_paths must be at least 1"),
            SimError::CurvesMissing => write!(f, "curves missing or inconsistent with the grid"),
            SimError::RetentionOverflow { required, budget } => {
                write!(f, "full retention needs {required} bytes, budget is {budget}")
            }
            SimError::Coeff(e) => write!(f, "{e}"),
            SimError::InsufficientPaths { worst_se, ceiling } => {
                write!(f, "standard error {worst_se} exceeds ceiling {ceiling}; more paths needed")
            }
            SimError::OffGrid(t) => write!(f, "checkpoint {t} is not a grid node"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<CoeffError> for SimError {
    fn from(e: CoeffError) -> Self {
        SimError::Coeff(e)
    }
}

/// Independent primitives of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveDraw {
    pub targets: Vec<f64>,
    pub w0: f64,
    pub dw: Vec<f64>,
    pub seed: u64,
    pub path_id: u64,
}

impl PrimitiveDraw {
    pub fn a_sigma(&self) -> f64 {
        self.targets.iter().sum()
    }
}

/// RNG of path `path_id`: ChaCha8 keyed by the master seed, one stream per path.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Draw order is fixed: M targets, then `w0`, then the increments.
pub fn draw_path(p: &ModelParams, n_steps: usize, master_seed: u64, path_id: u64) -> PrimitiveDraw {
    let mut rng = path_rng(master_seed, path_id);
    let targets = (0..p.m_rebalancers).map(|_| p.sigma_a * normal(&mut rng)).collect();
    let w0 = p.sigma_w0 * normal(&mut rng);
    let sd = libm::sqrt(1.0 / n_steps as f64);
    let dw = (0..n_steps).map(|_| sd * normal(&mut rng)).collect();
    PrimitiveDraw { targets, w0, dw, seed: master_seed, path_id }
}

pub fn draw_primitives(p: &ModelParams, n_steps: usize, n_paths: usize, master_seed: u64) -> Result<Vec<PrimitiveDraw>, SimError> {
    if n_paths == 0 {
        return Err(SimError::InvalidPathCount);
    }
    Ok((0..n_paths as u64).map(|i| draw_path(p, n_steps, master_seed, i)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepMode {
    /// Euler-Maruyama on the SDE forms of `eta` and `q_i`.
    Euler,
    /// `eta` and `q_i` from the explicit solutions with the shared integral `R` accumulated once.
    Exact,
}

impl StepMode {
    pub fn slug(self) -> &'static str {
        match self {
            StepMode::Euler => "euler",
            StepMode::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Retention {
    Summary,
    /// Keep every path trajectory, failing when it would exceed `budget_bytes`.
    Full {
        budget_bytes: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    pub mode: StepMode,
    pub retention: Retention,
    /// Bandwidths, in grid steps, at which increment moments are accumulated.
    pub strides: Vec<usize>,
    /// Contiguous path groups kept apart for bootstrap standard errors.
    pub n_batches: usize,
}

impl SimConfig {
    pub fn new(n_paths: usize, master_seed: u64) -> Self {
        SimConfig { n_paths, master_seed, mode: StepMode::Euler, retention: Retention::Summary, strides: vec![1, 2], n_batches: 20 }
    }

    pub fn n_chunks(&self) -> usize {
        self.n_paths.div_ceil(CHUNK)
    }
}

/// `k0` for the initial mixing of `curves`, which differs from `p.b0` for prescribed mixing.
pub(crate) fn gain_for(p: &ModelParams, b0: f64) -> f64 {
    let mut q = p.clone();
    q.b0 = b0;
    q.filter_gain0()
}

/// Curves and per-node coefficients shared read-only by all paths.
#[derive(Clone, Debug)]
pub struct Market {
    pub params: ModelParams,
    pub curves: EquilibriumCurves,
    pub coeffs: Vec<NodeCoeffs>,
    /// `B' Sigma / F1` at each node.
    pub kernel: Vec<f64>,
    pub k0: f64,
}

impl Market {
    pub fn new(p: &ModelParams, curves: Option<&EquilibriumCurves>) -> Result<Market, SimError> {
        let curves = curves.ok_or(SimError::CurvesMissing)?;
        if curves.len() != curves.grid.len() {
            return Err(SimError::CurvesMissing);
        }
        let coeffs = (0..curves.len()).map(|k| node_coeffs(curves, p, k)).collect::<Result<Vec<_>, _>>()?;
        let kernel = (0..curves.len()).map(|k| curves.kernel(k)).collect();
        Ok(Market { params: p.clone(), curves: curves.clone(), coeffs, kernel, k0: gain_for(p, curves.b[0]) })
    }

    /// Market whose traders follow `table` instead of the equilibrium holdings.
    pub fn with_holdings(mut self, table: &HoldingsCoeffs) -> Result<Market, SimError> {
        if table.nodes.len() != self.coeffs.len() || table.kind != self.curves.kind {
            return Err(SimError::CurvesMissing);
        }
        for (c, h) in self.coeffs.iter_mut().zip(&table.nodes) {
            c.holdings = *h;
        }
        Ok(self)
    }

    pub fn kind(&self) -> EquilibriumKind {
        self.curves.kind
    }

    pub fn n_steps(&self) -> usize {
        self.curves.grid.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.curves.grid.dt()
    }
}

/// Every state and output series of one path, node-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathTrajectory {
    pub path_id: u64,
    pub m: usize,
    pub targets: Vec<f64>,
    pub w0: f64,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
    pub w: Vec<f64>,
    pub price: Vec<f64>,
    /// `q[k * m + i]`
    pub q: Vec<f64>,
    /// Rebalancer holdings, `reb[k * m + i]`.
    pub reb: Vec<f64>,
    /// Common holding of every tracker.
    pub trk: Vec<f64>,
    pub reb_wealth: Vec<f64>,
    pub trk_wealth: Vec<f64>,
    /// Innovations increments over step `k`, `innov[k * m + i]`.
    pub innov: Vec<f64>,
    /// Tracker-frame price drift.
    pub trk_drift: Vec<f64>,
    /// Rebalancer-frame price drift of rebalancer 0.
    pub reb_drift: Vec<f64>,
}

impl PathTrajectory {
    pub fn nodes(&self) -> usize {
        self.y.len()
    }

    /// Holdings of trader `k`: rebalancers first, then the `Mbar` identical trackers.
    pub fn holding(&self, node: usize, trader: usize) -> f64 {
        if trader < self.m {
            self.reb[node * self.m + trader]
        } else {
            self.trk[node]
        }
    }

    /// Bytes held by one retained trajectory with `m` rebalancers on `nodes` nodes.
    pub fn footprint(m: usize, nodes: usize) -> usize {
        core::mem::size_of::<f64>() * nodes * (8 + 4 * m) + core::mem::size_of::<PathTrajectory>()
    }

    fn reset(&mut self, m: usize, nodes: usize) {
        self.m = m;
        for v in [&mut self.y, &mut self.eta, &mut self.w, &mut self.price, &mut self.trk, &mut self.trk_wealth, &mut self.trk_drift, &mut self.reb_drift] {
            v.clear();
            v.resize(nodes, 0.0);
        }
        for v in [&mut self.q, &mut self.reb, &mut self.reb_wealth, &mut self.innov] {
            v.clear();
            v.resize(nodes * m, 0.0);
        }
    }
}

/// Simulates one path into `out`, streaming identity residuals into `ident`.
pub fn simulate_path(mk: &Market, draw: &PrimitiveDraw, mode: StepMode, out: &mut PathTrajectory, ident: &mut IdentityMax) {
    let p = &mk.params;
    let cv = &mk.curves;
    let m = p.m_rebalancers;
    let mf = p.m();
    let mb = p.m_bar();
    let n = mk.n_steps();
    let h = mk.dt();
    let gamma = p.gamma;
    out.reset(m, n + 1);
    out.path_id = draw.path_id;
    out.targets.clear();
    out.targets.extend_from_slice(&draw.targets);
    out.w0 = draw.w0;

    let a_sigma = draw.a_sigma();
    let x: Vec<f64> = draw.targets.iter().map(|a| a_sigma - a).collect();
    let b0 = cv.b[0];
    let q0: Vec<f64> = x.iter().map(|xi| -mk.k0 * (draw.w0 - b0 * xi)).collect();
    let eta0 = -mf * mk.k0 * (draw.w0 - b0 * a_sigma);
    let c0 = mk.k0 * b0;

    let mut w = draw.w0;
    let mut y = draw.w0 - b0 * a_sigma;
    let mut eta = eta0;
    let mut q = q0.clone();
    let mut r_int = 0.0;
    let mut price = y;
    ident.initial_price(price - (draw.w0 - b0 * a_sigma));
    let mut reb_wealth = vec![0.0; m];
    let mut trk_wealth = 0.0;
    let mut wealth_scale = 0.0;
    let mut th = vec![0.0; m];
    let mut sq_holdings = 0.0;

    for k in 0..=n {
        let nc = &mk.coeffs[k];
        let node = &nc.node;
        let hl = &nc.holdings;
        for i in 0..m {
            th[i] = hl.rebalancer(draw.targets[i], q[i], eta, y);
        }
        let th_j = hl.tracker(eta, w, a_sigma);
        let mu = nc.drift.tracker(eta, w, a_sigma);
        let mu0 = nc.drift.rebalancer(draw.targets[0], q[0], eta, y);

        out.y[k] = y;
        out.eta[k] = eta;
        out.w[k] = w;
        out.price[k] = price;
        out.trk[k] = th_j;
        out.trk_wealth[k] = trk_wealth;
        out.trk_drift[k] = mu;
        out.reb_drift[k] = mu0;
        out.q[k * m..(k + 1) * m].copy_from_slice(&q);
        out.reb[k * m..(k + 1) * m].copy_from_slice(&th);
        out.reb_wealth[k * m..(k + 1) * m].copy_from_slice(&reb_wealth);

        // Identities at node k.
        let clear: f64 = th.iter().sum::<f64>() + mb * th_j;
        let big = th.iter().fold(th_j.abs(), |acc, v| acc.max(v.abs()));
        let d_sum = q.iter().sum::<f64>() - eta - node.a * a_sigma;
        ident.clearing(clear, clear - hl.reb_on_qi * d_sum, big);
        ident.decomposition_sum(d_sum);
        let f_c = node.f1 * (c0 + node.f2);
        for (&qi, &ai) in q.iter().zip(&draw.targets) {
            ident.decomposition_inverse(qi - (eta / mf - f_c * ai));
            let s = MarketState { ai, qi, eta, a_sigma, w };
            ident.drift_matching(coeffs::drift_matching(nc, &s).relative());
        }
        ident.y_identity(y - (w - node.b * a_sigma));
        if let Perception::Nash(nu) = nc.perception {
            let s = MarketState { ai: draw.targets[0], qi: q[0], eta, a_sigma, w };
            let mut devs = vec![nash::Deviator::Tracker];
            if m >= 2 {
                devs.push(nash::Deviator::Rebalancer { ai: draw.targets[1], qi: q[1] });
            }
            for who in devs {
                let star = match who {
                    nash::Deviator::Rebalancer { ai, qi } => hl.rebalancer(ai, qi, eta, y),
                    nash::Deviator::Tracker => th_j,
                };
                let (ri, rj) = nash::response_decomposition(node, &nu, hl, &s, who, star);
                ident.nash_consistency(ri.relative().max(rj.relative()));
            }
        }
        let sum_w: f64 = reb_wealth.iter().sum::<f64>() + mb * trk_wealth;
        ident.wealth(sum_w, wealth_scale);
        sq_holdings += th.iter().map(|v| v * v).sum::<f64>() * if k == 0 || k == n { 0.5 * h } else { h };

        if k == n {
            break;
        }
        let dw = draw.dw[k];
        let db = node.db;
        let ds = mu * h + gamma * dw;
        for i in 0..m {
            let dwi = dw - db * (x[i] - q[i]) * h;
            out.innov[k * m + i] = dwi;
            let mu_i = nc.drift.rebalancer(draw.targets[i], q[i], eta, y);
            let fr = coeffs::Residual { diff: (mu_i * h + gamma * dwi) - ds, scale: (mu_i * h).abs() + (gamma * dwi).abs() + ds.abs() };
            ident.frame(fr.relative());
            reb_wealth[i] += th[i] * ds;
            wealth_scale += (th[i] * ds).abs();
        }
        trk_wealth += th_j * ds;
        wealth_scale += mb * (th_j * ds).abs();
        price += ds;

        let w_next = w + dw;
        let y_next = y + dw - (cv.b[k + 1] - cv.b[k]) * a_sigma;
        match mode {
            StepMode::Euler => {
                let s = node.sigma;
                // Driven by the SDE increment of Y. The state Y above moves by the curve increment of B,
                // and feeding that in here adds a B'' h^2 drift per step to the decomposition residual.
                eta += -db * db * s * eta * h - mf * db * s * (dw - db * a_sigma * h);
                for (qi, innov) in q.iter_mut().zip(&out.innov[k * m..(k + 1) * m]) {
                    *qi += -db * s * innov;
                }
            }
            StepMode::Exact => {
                r_int += mk.kernel[k] * dw;
                let nx = &mk.coeffs[k + 1].node;
                eta = nx.f1 * (eta0 + mf * nx.f2 * a_sigma - mf * r_int);
                for i in 0..m {
                    q[i] = nx.f1 * (q0[i] + nx.f2 * x[i] - r_int);
                }
            }
        }
        w = w_next;
        y = y_next;
    }
    ident.square_integral(sq_holdings / mf);
}
