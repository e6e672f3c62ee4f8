//! Path-parallel drivers for the chunked reductions of the core crate.
//!
//! Chunks run on the rayon pool in windows and are absorbed in chunk order, so results are
//! bit-identical to the serial drivers for any thread count.

use rayon::prelude::*;

use ldm_core::analytics::{AnalyticsError, ValueOptions, ValuePlan, ValueSurface};
use ldm_core::sim::{BatchBuilder, Market, SimBatch, SimConfig, SimError};
use ldm_core::{EquilibriumCurves, ModelParams};

/// Chunks in flight per pool thread. Bounds peak memory to a few chunk partials per thread.
const WINDOW_PER_THREAD: usize = 2;

fn windows(n: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let w = (rayon::current_num_threads() * WINDOW_PER_THREAD).max(1);
    (0..n.div_ceil(w)).map(move |i| i * w..((i + 1) * w).min(n))
}

pub fn simulate_batch(market: &Market, cfg: &SimConfig) -> Result<SimBatch, SimError> {
    let mut b = BatchBuilder::new(market, cfg)?;
    for win in windows(b.n_chunks()) {
        let parts: Vec<_> = win.into_par_iter().map(|c| b.run_chunk(c)).collect();
        for part in parts {
            b.absorb(part);
        }
    }
    Ok(b.finish())
}

pub fn value_surface(p: &ModelParams, curves: &EquilibriumCurves, a_grid: &[f64], opts: &ValueOptions) -> Result<ValueSurface, AnalyticsError> {
    let mut plan = ValuePlan::new(p, curves, opts)?;
    for win in windows(plan.n_chunks()) {
        let parts: Vec<_> = win.into_par_iter().map(|c| plan.run_chunk(c)).collect();
        for part in parts {
            plan.absorb(part);
        }
    }
    plan.finish(a_grid)
}
