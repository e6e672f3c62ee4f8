//! Increment correlations estimated from the moments a [`SimBatch`] accumulates.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnalyticsError;
use crate::sim::{correlation, IncrementMoments, SimBatch, CH_CROSS, CH_PRICE, CH_REB, CH_TRK};

/// Bootstrap replicates over batches.
const N_BOOT: usize = 200;
/// Stream offset that keeps bootstrap draws apart from path draws of the same seed.
const BOOT_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HolderSeries {
    Rebalancer,
    Tracker,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    /// Start of the first increment.
    pub t: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    /// Bandwidth as a time length.
    pub h: f64,
    /// `true` when the estimate is the raw correlation divided by `h`.
    pub scaled: bool,
}

impl CorrelationCurve {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn weights_pooled(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

/// Six sums with batch `b` counted `w[b]` times.
fn weighted(inc: &IncrementMoments, w: &[f64], k: usize, ch: usize, si: usize) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (b, wb) in w.iter().enumerate() {
        if *wb == 0.0 {
            continue;
        }
        let s = inc.raw(Some(b), k, ch, si);
        for (o, v) in out.iter_mut().zip(s) {
            *o += wb * v;
        }
    }
    out
}

/// Curve evaluator over batch weights; returns `None` where increments are degenerate.
type Eval<'a> = dyn Fn(&[f64], usize) -> Option<f64> + 'a;

fn bootstrap(batch: &SimBatch, n_out: usize, eval: &Eval<'_>, t_of: impl Fn(usize) -> f64) -> Result<(Vec<f64>, Vec<f64>), AnalyticsError> {
    let nb = batch.increments.n_batches;
    let pooled = weights_pooled(nb);
    let mut est = Vec::with_capacity(n_out);
    for j in 0..n_out {
        est.push(eval(&pooled, j).ok_or(AnalyticsError::DegenerateIncrements { t: t_of(j) })?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(batch.master_seed);
    rng.set_stream(BOOT_STREAM);
    let (mut s1, mut s2) = (vec![0.0; n_out], vec![0.0; n_out]);
    let mut used = vec![0.0f64; n_out];
    let mut w = vec![0.0; nb];
    for _ in 0..N_BOOT {
        w.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..nb {
            w[rng.random_range(0..nb)] += 1.0;
        }
        for j in 0..n_out {
            // A replicate can land on degenerate batches; it is dropped for that node only.
            if let Some(v) = eval(&w, j) {
                s1[j] += v;
                s2[j] += v * v;
                used[j] += 1.0;
            }
        }
    }
    let se = (0..n_out)
        .map(|j| {
            let n = used[j];
            if n < 2.0 {
                return f64::NAN;
            }
            let mu = s1[j] / n;
            libm::sqrt(((s2[j] / n - mu * mu) * n / (n - 1.0)).max(0.0))
        })
        .collect();
    Ok((est, se))
}

/// Stride indices for `s` and `s / 2`.
fn richardson_pair(inc: &IncrementMoments, s: usize, n_steps: usize) -> Result<(usize, usize), AnalyticsError> {
    if s < 2 || s % 2 != 0 || 2 * s > n_steps {
        return Err(AnalyticsError::BandwidthTooCoarse { stride: s });
    }
    let full = inc.stride_index(s).ok_or(AnalyticsError::BandwidthTooCoarse { stride: s })?;
    let half = inc.stride_index(s / 2).ok_or(AnalyticsError::BandwidthTooCoarse { stride: s / 2 })?;
    Ok((full, half))
}

/// Lag-channel correlation at bandwidth `h = stride dt`, divided by `h`, extrapolated from
/// `h` and `h / 2` as `2 rho(h/2) - rho(h)`. Channel moments are centred on the middle node.
fn scaled_lag_curve(batch: &SimBatch, ch: usize, stride: usize) -> Result<CorrelationCurve, AnalyticsError> {
    let n = batch.n_steps();
    let inc = &batch.increments;
    let (si, hi) = richardson_pair(inc, stride, n)?;
    let dt = batch.curves.grid.dt();
    let (h, hh) = (stride as f64 * dt, (stride / 2) as f64 * dt);
    let half = stride / 2;
    let n_out = n + 1 - 2 * stride;
    let eval = |w: &[f64], j: usize| -> Option<f64> {
        let rf = correlation(&weighted(inc, w, j + stride, ch, si))? / h;
        let rh = correlation(&weighted(inc, w, j + half, ch, hi))? / hh;
        Some(2.0 * rh - rf)
    };
    let t_of = |j: usize| batch.curves.t(j);
    let (estimate, se) = bootstrap(batch, n_out, &eval, t_of)?;
    Ok(CorrelationCurve { t: (0..n_out).map(t_of).collect(), estimate, se, h, scaled: true })
}

/// Scaled consecutive-increment autocorrelation of rebalancer or tracker holdings.
///
/// `stride` is the bandwidth in grid steps; it and its half must be accumulated strides of the
/// batch. Rebalancer increments pool all `M` rebalancers.
pub fn trading_autocorrelation(batch: &SimBatch, series: HolderSeries, stride: usize) -> Result<CorrelationCurve, AnalyticsError> {
    let ch = match series {
        HolderSeries::Rebalancer => CH_REB,
        HolderSeries::Tracker => CH_TRK,
    };
    scaled_lag_curve(batch, ch, stride)
}

pub fn price_autocorrelation(batch: &SimBatch, stride: usize) -> Result<CorrelationCurve, AnalyticsError> {
    scaled_lag_curve(batch, CH_PRICE, stride)
}

/// Raw correlation of same-interval rebalancer and tracker holding increments at
/// `h = stride dt`, for every start node.
pub fn cross_correlation_estimate(batch: &SimBatch, stride: usize) -> Result<CorrelationCurve, AnalyticsError> {
    let n = batch.n_steps();
    let inc = &batch.increments;
    let si = inc.stride_index(stride).ok_or(AnalyticsError::BandwidthTooCoarse { stride })?;
    let n_out = n + 1 - stride;
    let eval = |w: &[f64], j: usize| correlation(&weighted(inc, w, j, CH_CROSS, si));
    let t_of = |j: usize| batch.curves.t(j);
    let (estimate, se) = bootstrap(batch, n_out, &eval, t_of)?;
    Ok(CorrelationCurve { t: (0..n_out).map(t_of).collect(), estimate, se, h: stride as f64 * batch.curves.grid.dt(), scaled: false })
}

/// `2 fine - coarse` at the start times both curves share, for scaled curves from grids of
/// `2n` and `n` steps. The grid discretization biases a scaled estimate at `O(dt)` whatever the
/// bandwidth, so this removes the bias the in-batch bandwidth extrapolation leaves.
pub fn grid_extrapolate(fine: &CorrelationCurve, coarse: &CorrelationCurve) -> CorrelationCurve {
    let mut out = CorrelationCurve { t: Vec::new(), estimate: Vec::new(), se: Vec::new(), h: fine.h, scaled: fine.scaled };
    let mut j = 0;
    for (i, t) in coarse.t.iter().enumerate() {
        while j < fine.t.len() && fine.t[j] < *t - 1e-12 {
            j += 1;
        }
        if j < fine.t.len() && (fine.t[j] - t).abs() <= 1e-12 {
            out.t.push(*t);
            out.estimate.push(2.0 * fine.estimate[j] - coarse.estimate[i]);
            out.se.push(libm::sqrt(4.0 * fine.se[j] * fine.se[j] + coarse.se[i] * coarse.se[i]));
        }
    }
    out
}
