//! Fourth-order quadrature on uniformly spaced samples.

use alloc::vec;
use alloc::vec::Vec;

/// `out[k] = integral of g from node 0 to node k`, all entries fourth order.
///
/// Even k: composite Simpson. Odd k >= 3: Simpson up to k-3 plus the 3/8 rule.
/// k = 1 uses the four-point formula on nodes 0..=3.
pub fn cumulative_simpson(g: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (g[0] + g[1]);
        return out;
    }
    // out[k] for even k by running Simpson panels.
    let mut k = 2;
    while k < n {
        out[k] = out[k - 2] + h / 3.0 * (g[k - 2] + 4.0 * g[k - 1] + g[k]);
        k += 2;
    }
    out[1] = if n >= 4 { h * (9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]) / 24.0 } else { h * (5.0 * g[0] + 8.0 * g[1] - g[2]) / 12.0 };
    let mut k = 3;
    while k < n {
        out[k] = out[k - 3] + 3.0 * h / 8.0 * (g[k - 3] + 3.0 * g[k - 2] + 3.0 * g[k - 1] + g[k]);
        k += 2;
    }
    out
}

/// Integral over the whole grid.
pub fn simpson(g: &[f64], h: f64) -> f64 {
    cumulative_simpson(g, h).last().copied().unwrap_or(0.0)
}

/// Fourth-order derivative estimate at every node of a uniform grid.
///
/// Central five-point stencil inside, one-sided five-point stencils at the two ends on each side.
pub fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "five-point derivative needs at least five samples");
    let mut d = vec![0.0; n];
    for k in 2..n - 2 {
        d[k] = (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / (12.0 * h);
    }
    let fwd0 = |i: usize| (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4]) / (12.0 * h);
    let fwd1 = |i: usize| (-3.0 * f[i - 1] - 10.0 * f[i] + 18.0 * f[i + 1] - 6.0 * f[i + 2] + f[i + 3]) / (12.0 * h);
    let bwd0 = |i: usize| (25.0 * f[i] - 48.0 * f[i - 1] + 36.0 * f[i - 2] - 16.0 * f[i - 3] + 3.0 * f[i - 4]) / (12.0 * h);
    let bwd1 = |i: usize| (3.0 * f[i + 1] + 10.0 * f[i] - 18.0 * f[i - 1] + 6.0 * f[i - 2] - f[i - 3]) / (12.0 * h);
    d[0] = fwd0(0);
    d[1] = fwd1(1);
    d[n - 1] = bwd0(n - 1);
    d[n - 2] = bwd1(n - 2);
    d
}
