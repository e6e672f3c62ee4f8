//! Brute-force regression oracle for the recursive filter `q_i`.
//!
//! Given `Y_{i,0}` and the path of `Y_i`, the likelihood of `X = a_Sigma - a_i` depends on the
//! path only through `int B' dY_i`. The conditional mean is therefore linear in
//! `[1, Y_{i,0}, T_t]` with `T_t = sum_k (B_{k+1} - B_k)(Y_{i,k+1} - Y_{i,k}) / h`, and a
//! cross-sectional OLS of `X` on those regressors estimates it without using the filter gain.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use super::{draw_path, gain_for, SimError};
use crate::model::ModelParams;
use crate::ode::EquilibriumCurves;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterCheckpoint {
    pub t: f64,
    pub node: usize,
    /// OLS coefficients of `X` on `[1, Y_{i,0}, T_t]` and their standard errors.
    pub oracle: [f64; 3],
    pub oracle_se: [f64; 3],
    /// Same regression with the recursive `q_{i,t}` as the response.
    pub recursive: [f64; 3],
    /// Residual variance of the oracle regression; estimates `Sigma(t)`.
    pub residual_var: f64,
    pub sigma: f64,
    /// Root mean square of `q_{i,t}` minus the oracle prediction.
    pub rms_gap: f64,
}

impl FilterCheckpoint {
    /// Every coefficient within `z` standard errors, plus `1e-8 (1 + |b|)` for exact fits.
    pub fn within(&self, z: f64) -> bool {
        (0..3).all(|j| (self.recursive[j] - self.oracle[j]).abs() <= z * self.oracle_se[j] + 1e-8 * (1.0 + self.oracle[j].abs()))
    }

    pub fn worst_z(&self) -> f64 {
        (0..3)
            .map(|j| {
                let d = (self.recursive[j] - self.oracle[j]).abs();
                if self.oracle_se[j] > 0.0 {
                    d / self.oracle_se[j]
                } else if d <= 1e-8 * (1.0 + self.oracle[j].abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Default)]
struct Normal {
    xtx: Matrix3<f64>,
    xty: Vector3<f64>,
    xtq: Vector3<f64>,
    yy: f64,
    qq: f64,
    n: f64,
}

impl Normal {
    fn add(&mut self, row: Vector3<f64>, y: f64, q: f64) {
        self.xtx += row * row.transpose();
        self.xty += row * y;
        self.xtq += row * q;
        self.yy += y * y;
        self.qq += q * q;
        self.n += 1.0;
    }

    fn solve(&self, t: f64, node: usize, sigma: f64) -> FilterCheckpoint {
        // Pseudo-inverse: with B = 0 the T column vanishes.
        let inv = self.xtx.pseudo_inverse(1e-12 * self.xtx.norm()).unwrap_or_else(|_| Matrix3::zeros());
        let b = inv * self.xty;
        let bq = inv * self.xtq;
        let rank = self.xtx.rank(1e-12 * self.xtx.norm()) as f64;
        let rss = (self.yy - b.dot(&self.xty)).max(0.0);
        let s2 = rss / (self.n - rank).max(1.0);
        let se = [libm::sqrt(s2 * inv[(0, 0)].max(0.0)), libm::sqrt(s2 * inv[(1, 1)].max(0.0)), libm::sqrt(s2 * inv[(2, 2)].max(0.0))];
        // Mean of (q - Xb)^2 from the accumulated cross products.
        let gap = self.qq - 2.0 * b.dot(&self.xtq) + (b.transpose() * self.xtx * b)[(0, 0)];
        FilterCheckpoint {
            t,
            node,
            oracle: [b[0], b[1], b[2]],
            oracle_se: se,
            recursive: [bq[0], bq[1], bq[2]],
            residual_var: s2,
            sigma,
            rms_gap: libm::sqrt((gap / self.n).max(0.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOracle {
    pub n_paths: usize,
    pub checkpoints: Vec<FilterCheckpoint>,
}

impl FilterOracle {
    pub fn all_within(&self, z: f64) -> bool {
        self.checkpoints.iter().all(|c| c.within(z))
    }
}

/// Oracle estimates for rebalancer 0 at `checkpoints`, which must be grid nodes.
///
/// Uses the same primitive draws as [`super::simulate_paths`] with the same seed. Fails with
/// `InsufficientPaths` when any oracle standard error exceeds `se_ceiling`.
pub fn filter_oracle(
    p: &ModelParams,
    curves: &EquilibriumCurves,
    checkpoints: &[f64],
    n_paths: usize,
    master_seed: u64,
    se_ceiling: f64,
) -> Result<FilterOracle, SimError> {
    if n_paths == 0 {
        return Err(SimError::InvalidPathCount);
    }
    let grid = curves.grid;
    let nodes: Vec<usize> = checkpoints.iter().map(|t| grid.node_of(*t).ok_or(SimError::OffGrid(*t))).collect::<Result<_, _>>()?;
    let n = grid.n_steps;
    let h = grid.dt();
    let k0 = gain_for(p, curves.b[0]);
    let b = &curves.b;
    let mut acc: Vec<Normal> = nodes.iter().map(|_| Normal::default()).collect();
    for id in 0..n_paths as u64 {
        let d = draw_path(p, n, master_seed, id);
        let x = d.a_sigma() - d.targets[0];
        let yi0 = d.w0 - b[0] * x;
        let mut q = -k0 * yi0;
        let mut tstat = 0.0;
        for k in 0..=n {
            for (slot, nk) in nodes.iter().enumerate() {
                if *nk == k {
                    acc[slot].add(Vector3::new(1.0, yi0, tstat), x, q);
                }
            }
            if k == n {
                break;
            }
            let db = b[k + 1] - b[k];
            let dyi = d.dw[k] - db * x;
            tstat += db * dyi / h;
            let bp = curves.b_prime[k];
            let dwi = d.dw[k] - bp * (x - q) * h;
            q += -bp * curves.sigma_filt[k] * dwi;
        }
    }
    let checkpoints: Vec<FilterCheckpoint> = acc.iter().zip(checkpoints.iter().zip(&nodes)).map(|(a, (t, k))| a.solve(*t, *k, curves.sigma_filt[*k])).collect();
    let worst = checkpoints.iter().flat_map(|c| c.oracle_se).fold(0.0, f64::max);
    if worst > se_ceiling {
        return Err(SimError::InsufficientPaths { worst_se: worst, ceiling: se_ceiling });
    }
    Ok(FilterOracle { n_paths, checkpoints })
}
