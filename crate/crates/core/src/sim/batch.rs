//! Chunked batches and their deterministic reduction.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    draw_path, simulate_path, IdentityMax, IdentityReport, IdentityTolerances, Market, PathTrajectory, Retention, SimConfig, SimError, StepMode, CHUNK,
};
use crate::model::{EquilibriumKind, ModelParams};
use crate::ode::EquilibriumCurves;

/// Per-node cross-sectional series. Rebalancer series pool all `M` rebalancers.
pub const SERIES: [&str; 11] = ["reb_holding", "trk_holding", "price", "eta", "Y", "q", "w", "trk_drift", "reb_drift", "reb_wealth", "trk_wealth"];
const NS: usize = SERIES.len();

/// Increment channels: lagged pairs of rebalancer, tracker and price increments, then the
/// same-interval rebalancer and tracker increment pair.
pub(crate) const NCH: usize = 4;
pub(crate) const CH_REB: usize = 0;
pub(crate) const CH_TRK: usize = 1;
pub(crate) const CH_PRICE: usize = 2;
pub(crate) const CH_CROSS: usize = 3;

/// Raw power sums `x, x^2, x^3, x^4` of every series at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub nodes: usize,
    pub counts: [u64; NS],
    /// `sums[(k * NS + s) * 4 + p]` holds the sum of `x^(p+1)`.
    pub sums: Vec<f64>,
}

impl BatchSummary {
    fn new(nodes: usize) -> Self {
        BatchSummary { nodes, counts: [0; NS], sums: vec![0.0; nodes * NS * 4] }
    }

    fn add_value(&mut self, k: usize, s: usize, x: f64) {
        let o = (k * NS + s) * 4;
        let x2 = x * x;
        self.sums[o] += x;
        self.sums[o + 1] += x2;
        self.sums[o + 2] += x2 * x;
        self.sums[o + 3] += x2 * x2;
    }

    fn merge(&mut self, o: &BatchSummary) {
        for (a, b) in self.sums.iter_mut().zip(&o.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
    }

    pub fn series_index(name: &str) -> Option<usize> {
        SERIES.iter().position(|s| *s == name)
    }

    /// Sample mean and its standard error.
    pub fn mean(&self, series: usize, k: usize) -> (f64, f64) {
        let n = self.counts[series] as f64;
        let o = (k * NS + series) * 4;
        let mu = self.sums[o] / n;
        let var = (self.sums[o + 1] / n - mu * mu).max(0.0) * n / (n - 1.0);
        (mu, libm::sqrt(var / n))
    }

    /// Unbiased sample variance and its large-sample standard error.
    pub fn variance(&self, series: usize, k: usize) -> (f64, f64) {
        let n = self.counts[series] as f64;
        let o = (k * NS + series) * 4;
        let (r1, r2, r3, r4) = (self.sums[o] / n, self.sums[o + 1] / n, self.sums[o + 2] / n, self.sums[o + 3] / n);
        let m2 = (r2 - r1 * r1).max(0.0);
        let m4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1 * r1 * r1 * r1;
        let var = m2 * n / (n - 1.0);
        (var, libm::sqrt(((m4 - m2 * m2).max(0.0)) / n))
    }
}

/// Increment power sums `[n, a, b, a^2, b^2, a b]` per batch, node, channel and stride.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementMoments {
    pub strides: Vec<usize>,
    pub n_batches: usize,
    pub nodes: usize,
    pub sums: Vec<f64>,
}

impl IncrementMoments {
    fn new(strides: &[usize], n_batches: usize, nodes: usize) -> Self {
        IncrementMoments { strides: strides.to_vec(), n_batches, nodes, sums: vec![0.0; n_batches * nodes * NCH * strides.len() * 6] }
    }

    fn offset(&self, batch: usize, k: usize, ch: usize, si: usize) -> usize {
        (((batch * self.nodes + k) * NCH + ch) * self.strides.len() + si) * 6
    }

    fn add(&mut self, batch: usize, k: usize, ch: usize, si: usize, a: f64, b: f64) {
        let o = self.offset(batch, k, ch, si);
        let s = &mut self.sums[o..o + 6];
        s[0] += 1.0;
        s[1] += a;
        s[2] += b;
        s[3] += a * a;
        s[4] += b * b;
        s[5] += a * b;
    }

    /// The six sums for one batch, or pooled over batches when `batch` is `None`.
    pub fn raw(&self, batch: Option<usize>, k: usize, ch: usize, si: usize) -> [f64; 6] {
        let mut out = [0.0; 6];
        let range = match batch {
            Some(b) => b..b + 1,
            None => 0..self.n_batches,
        };
        for b in range {
            let o = self.offset(b, k, ch, si);
            for (x, y) in out.iter_mut().zip(&self.sums[o..o + 6]) {
                *x += y;
            }
        }
        out
    }

    pub fn stride_index(&self, stride: usize) -> Option<usize> {
        self.strides.iter().position(|s| *s == stride)
    }
}

/// Sample correlation from the six increment sums; `None` when either side has no variance.
pub fn correlation(s: &[f64; 6]) -> Option<f64> {
    let n = s[0];
    if n < 2.0 {
        return None;
    }
    let (ma, mb) = (s[1] / n, s[2] / n);
    let va = s[3] / n - ma * ma;
    let vb = s[4] / n - mb * mb;
    let c = s[5] / n - ma * mb;
    if !(va > 0.0 && vb > 0.0) {
        return None;
    }
    Some(c / libm::sqrt(va * vb))
}

/// Reduction state of one chunk of paths.
#[derive(Clone, Debug)]
pub struct ChunkPartial {
    pub chunk: usize,
    pub summary: BatchSummary,
    pub increments: IncrementMoments,
    pub identities: IdentityMax,
    pub paths: Vec<PathTrajectory>,
}

/// Everything a batch of paths produced.
#[derive(Clone, Debug)]
pub struct SimBatch {
    pub params: ModelParams,
    pub kind: EquilibriumKind,
    pub curves: EquilibriumCurves,
    pub n_paths: usize,
    pub master_seed: u64,
    pub mode: StepMode,
    pub summary: BatchSummary,
    pub increments: IncrementMoments,
    pub identities: IdentityMax,
    /// Trajectories in path order under full retention.
    pub paths: Option<Vec<PathTrajectory>>,
}

impl SimBatch {
    pub fn n_steps(&self) -> usize {
        self.curves.grid.n_steps
    }

    pub fn report(&self) -> IdentityReport {
        IdentityReport::build(&self.identities, &IdentityTolerances::for_batch(self.mode, self.n_steps(), self.kind), self.kind)
    }
}

/// Drives chunk simulation and absorbs partials strictly in chunk order.
#[derive(Debug)]
pub struct BatchBuilder<'a> {
    market: &'a Market,
    cfg: SimConfig,
    next: usize,
    summary: BatchSummary,
    increments: IncrementMoments,
    identities: IdentityMax,
    paths: Option<Vec<PathTrajectory>>,
}

impl<'a> BatchBuilder<'a> {
    pub fn new(market: &'a Market, cfg: &SimConfig) -> Result<Self, SimError> {
        if cfg.n_paths == 0 {
            return Err(SimError::InvalidPathCount);
        }
        let nodes = market.curves.len();
        let paths = match cfg.retention {
            Retention::Summary => None,
            Retention::Full { budget_bytes } => {
                let required = cfg.n_paths.saturating_mul(PathTrajectory::footprint(market.params.m_rebalancers, nodes));
                if required > budget_bytes {
                    return Err(SimError::RetentionOverflow { required, budget: budget_bytes });
                }
                Some(Vec::with_capacity(cfg.n_paths))
            }
        };
        let mut cfg = cfg.clone();
        cfg.n_batches = cfg.n_batches.clamp(1, cfg.n_chunks());
        cfg.strides.retain(|s| *s >= 1 && 2 * s <= market.n_steps());
        Ok(BatchBuilder {
            market,
            summary: BatchSummary::new(nodes),
            increments: IncrementMoments::new(&cfg.strides, cfg.n_batches, nodes),
            identities: IdentityMax::default(),
            paths,
            next: 0,
            cfg,
        })
    }

    pub fn n_chunks(&self) -> usize {
        self.cfg.n_chunks()
    }

    /// Pure function of the chunk index; safe to call from any thread.
    pub fn run_chunk(&self, chunk: usize) -> ChunkPartial {
        let mk = self.market;
        let p = &mk.params;
        let m = p.m_rebalancers;
        let n = mk.n_steps();
        let nodes = n + 1;
        let mut part = ChunkPartial {
            chunk,
            summary: BatchSummary::new(nodes),
            increments: IncrementMoments::new(&self.cfg.strides, 1, nodes),
            identities: IdentityMax::default(),
            paths: Vec::new(),
        };
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(self.cfg.n_paths);
        let mut tr = PathTrajectory::default();
        for id in lo..hi {
            let draw = draw_path(p, n, self.cfg.master_seed, id as u64);
            simulate_path(mk, &draw, self.cfg.mode, &mut tr, &mut part.identities);
            accumulate(&mut part, &tr, m);
            if self.paths.is_some() {
                part.paths.push(tr.clone());
            }
        }
        part
    }

    pub fn absorb(&mut self, part: ChunkPartial) {
        assert_eq!(part.chunk, self.next, "chunk partials must be absorbed in order");
        self.next += 1;
        self.summary.merge(&part.summary);
        let batch = part.chunk * self.cfg.n_batches / self.cfg.n_chunks();
        let dst = self.increments.offset(batch, 0, 0, 0);
        let len = part.increments.sums.len();
        for (a, b) in self.increments.sums[dst..dst + len].iter_mut().zip(&part.increments.sums) {
            *a += b;
        }
        self.identities.merge(&part.identities);
        if let Some(v) = self.paths.as_mut() {
            v.extend(part.paths);
        }
    }

    pub fn finish(self) -> SimBatch {
        assert_eq!(self.next, self.cfg.n_chunks(), "missing chunk partials");
        let mk = self.market;
        SimBatch {
            params: mk.params.clone(),
            kind: mk.kind(),
            curves: mk.curves.clone(),
            n_paths: self.cfg.n_paths,
            master_seed: self.cfg.master_seed,
            mode: self.cfg.mode,
            summary: self.summary,
            increments: self.increments,
            identities: self.identities,
            paths: self.paths,
        }
    }
}

fn accumulate(part: &mut ChunkPartial, tr: &PathTrajectory, m: usize) {
    let nodes = tr.nodes();
    let s = &mut part.summary;
    for k in 0..nodes {
        for i in 0..m {
            s.add_value(k, 0, tr.reb[k * m + i]);
            s.add_value(k, 5, tr.q[k * m + i]);
            s.add_value(k, 9, tr.reb_wealth[k * m + i]);
        }
        s.add_value(k, 1, tr.trk[k]);
        s.add_value(k, 2, tr.price[k]);
        s.add_value(k, 3, tr.eta[k]);
        s.add_value(k, 4, tr.y[k]);
        s.add_value(k, 6, tr.w[k]);
        s.add_value(k, 7, tr.trk_drift[k]);
        s.add_value(k, 8, tr.reb_drift[k]);
        s.add_value(k, 10, tr.trk_wealth[k]);
    }
    for (c, per) in s.counts.iter_mut().zip([m, 1, 1, 1, 1, m, 1, 1, 1, m, 1]) {
        *c += per as u64;
    }
    let inc = &mut part.increments;
    let n = nodes - 1;
    for si in 0..inc.strides.len() {
        let st = inc.strides[si];
        for k in st..=n - st {
            for i in 0..m {
                let x = |j: usize| tr.reb[j * m + i];
                inc.add(0, k, CH_REB, si, x(k) - x(k - st), x(k + st) - x(k));
            }
            inc.add(0, k, CH_TRK, si, tr.trk[k] - tr.trk[k - st], tr.trk[k + st] - tr.trk[k]);
            inc.add(0, k, CH_PRICE, si, tr.price[k] - tr.price[k - st], tr.price[k + st] - tr.price[k]);
        }
        for k in 0..=n - st {
            let dj = tr.trk[k + st] - tr.trk[k];
            for i in 0..m {
                inc.add(0, k, CH_CROSS, si, tr.reb[(k + st) * m + i] - tr.reb[k * m + i], dj);
            }
        }
    }
}

/// Serial batch; the std crate runs the same chunks in parallel with identical output.
pub fn simulate_paths(market: &Market, cfg: &SimConfig) -> Result<SimBatch, SimError> {
    let mut b = BatchBuilder::new(market, cfg)?;
    for c in 0..b.n_chunks() {
        let part = b.run_chunk(c);
        b.absorb(part);
    }
    Ok(b.finish())
}
