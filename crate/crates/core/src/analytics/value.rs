//! Rebalancer value function under the conditioning `Y_{i,0} = 0` and the cost of carrying a
//! target.
//!
//! Given `Y_{i,0} = 0` the remaining draws `X ~ N(0, Sigma(0))`, `w_0 = B(0) X` and `w°` do not
//! depend on `a_i`, and every state is affine in `a_i`. Per path the objective is therefore an
//! exact quadratic `c0 + c1 a + c2 a^2` with deterministic `c2`, so one set of paths serves the
//! whole grid with common random numbers.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use super::{basis_covariance, bilinear, AnalyticsError, Cov5};
use crate::coeffs::ortho::{dot, Basis};
use crate::coeffs::{basis_loadings, BasisLoadings};
use crate::model::{EquilibriumKind, ModelParams};
use crate::ode::{EquilibriumCurves, KindMismatch};
use crate::quad::simpson;
use crate::sim::{normal, path_rng, CHUNK};

#[derive(Clone, Debug, PartialEq)]
pub struct ValueOptions {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Largest admissible standard error of any `J` estimate.
    pub se_ceiling: Option<f64>,
    /// Nash curves are accepted only when set.
    pub allow_nash: bool,
}

impl ValueOptions {
    pub fn new(n_paths: usize, master_seed: u64) -> Self {
        ValueOptions { n_paths, master_seed, se_ceiling: None, allow_nash: false }
    }
}

/// Sums of `c0, c1, c0^2, c1^2, c0 c1` for the drift form then the pathwise form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValuePartial {
    pub chunk: usize,
    pub paths: u64,
    pub sums: [[f64; 5]; 2],
}

impl ValuePartial {
    fn add(&mut self, form: usize, c0: f64, c1: f64) {
        let s = &mut self.sums[form];
        s[0] += c0;
        s[1] += c1;
        s[2] += c0 * c0;
        s[3] += c1 * c1;
        s[4] += c0 * c1;
    }

    fn merge(&mut self, o: &ValuePartial) {
        for f in 0..2 {
            for j in 0..5 {
                self.sums[f][j] += o.sums[f][j];
            }
        }
        self.paths += o.paths;
    }
}

/// Precomputed loadings and the chunked reduction of the per-path coefficients.
pub struct ValuePlan {
    params: ModelParams,
    opts: ValueOptions,
    loads: Vec<BasisLoadings>,
    kappa: Vec<f64>,
    cov: Vec<Cov5>,
    h: f64,
    sigma0: f64,
    b0: f64,
    /// Deterministic `a_i^2` coefficients of the two forms.
    c2: [f64; 2],
    acc: ValuePartial,
    next_chunk: usize,
}

fn zero_ai(mut l: Basis) -> Basis {
    l[0] = 0.0;
    l
}

impl ValuePlan {
    pub fn new(p: &ModelParams, curves: &EquilibriumCurves, opts: &ValueOptions) -> Result<Self, AnalyticsError> {
        if curves.kind == EquilibriumKind::Nash && !opts.allow_nash {
            return Err(crate::coeffs::CoeffError::from(KindMismatch { expected: EquilibriumKind::PriceImpact, found: curves.kind }).into());
        }
        if opts.n_paths < 2 {
            return Err(AnalyticsError::InvalidPathCount);
        }
        let loads = basis_loadings(curves, p)?;
        let h = curves.grid.dt();
        let kappa: Vec<f64> = (0..curves.len()).map(|k| p.kappa.at(curves.t(k))).collect();
        let n = curves.grid.n_steps;
        let c2_of = |mu: fn(&BasisLoadings) -> f64| -> f64 {
            (0..n)
                .map(|k| {
                    let t1 = loads[k].reb[0];
                    h * (t1 * mu(&loads[k]) - kappa[k] * (1.0 - t1) * (1.0 - t1))
                })
                .sum()
        };
        let c2 = [c2_of(|l| l.drift_reb[0]), c2_of(|l| l.drift_trk[0])];
        Ok(ValuePlan {
            params: p.clone(),
            opts: opts.clone(),
            cov: basis_covariance(curves, p),
            loads,
            kappa,
            h,
            sigma0: curves.sigma_filt[0],
            b0: curves.b[0],
            c2,
            acc: ValuePartial::default(),
            next_chunk: 0,
        })
    }

    pub fn n_chunks(&self) -> usize {
        self.opts.n_paths.div_ceil(CHUNK)
    }

    /// Pure function of the chunk index.
    pub fn run_chunk(&self, chunk: usize) -> ValuePartial {
        let n = self.loads.len() - 1;
        let gamma = self.params.gamma;
        let sd = libm::sqrt(self.h);
        let mut part = ValuePartial { chunk, ..ValuePartial::default() };
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(self.opts.n_paths);
        for id in lo..hi {
            let mut rng = path_rng(self.opts.master_seed, id as u64);
            let x = libm::sqrt(self.sigma0) * normal(&mut rng);
            let w0 = self.b0 * x;
            let (mut wo, mut r) = (0.0, 0.0);
            // Forms: 0 drift (rebalancer frame), 1 pathwise.
            let (mut d0, mut d1, mut p0, mut p1) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..n {
                let l = &self.loads[k];
                let u = [0.0, x, w0, wo, r];
                let th0 = dot(&zero_ai(l.reb), &u);
                let th1 = l.reb[0];
                let mr0 = dot(&zero_ai(l.drift_reb), &u);
                let mr1 = l.drift_reb[0];
                let mt0 = dot(&zero_ai(l.drift_trk), &u);
                let mt1 = l.drift_trk[0];
                let kap = self.kappa[k];
                let pen0 = -kap * th0 * th0;
                let pen1 = 2.0 * kap * (1.0 - th1) * th0;
                d0 += self.h * (th0 * mr0 + pen0);
                d1 += self.h * (th0 * mr1 + th1 * mr0 + pen1);
                let dw = sd * normal(&mut rng);
                // dS = mu_trk dt + gamma dw°, split into its a_i^0 and a_i^1 parts.
                let ds0 = mt0 * self.h + gamma * dw;
                let ds1 = mt1 * self.h;
                p0 += th0 * ds0 + self.h * pen0;
                p1 += th0 * ds1 + th1 * ds0 + self.h * pen1;
                wo += dw;
                r += l.kernel * dw;
            }
            part.add(0, d0, d1);
            part.add(1, p0, p1);
            part.paths += 1;
        }
        part
    }

    /// Chunks must arrive in index order so the floating-point reduction is schedule-free.
    pub fn absorb(&mut self, part: ValuePartial) {
        assert_eq!(part.chunk, self.next_chunk, "chunks must be absorbed in order");
        self.acc.merge(&part);
        self.next_chunk += 1;
    }

    /// Deterministic `J` from the Gaussian moments of the basis under the conditioning.
    pub fn gaussian_j(&self, ai: f64) -> f64 {
        let s0 = self.sigma0;
        let f: Vec<f64> = self
            .loads
            .iter()
            .zip(&self.cov)
            .zip(&self.kappa)
            .map(|((l, c), kap)| {
                let mut cc = [[0.0; 5]; 5];
                cc[1][1] = s0;
                cc[1][2] = self.b0 * s0;
                cc[2][1] = self.b0 * s0;
                cc[2][2] = self.b0 * self.b0 * s0;
                for i in 3..5 {
                    for j in 3..5 {
                        cc[i][j] = c[i][j];
                    }
                }
                let th = l.reb[0] * ai;
                let mu = l.drift_reb[0] * ai;
                let e_thmu = th * mu + bilinear(&l.reb, &cc, &l.drift_reb);
                let e_gap2 = (ai - th) * (ai - th) + bilinear(&l.reb, &cc, &l.reb);
                e_thmu - kap * e_gap2
            })
            .collect();
        simpson(&f, self.h)
    }

    pub fn finish(self, a_grid: &[f64]) -> Result<ValueSurface, AnalyticsError> {
        let n = self.acc.paths as f64;
        let stats = |form: usize, a: f64| -> (f64, f64) {
            let s = &self.acc.sums[form];
            let (m0, m1) = (s[0] / n, s[1] / n);
            let v0 = s[2] / n - m0 * m0;
            let v1 = s[3] / n - m1 * m1;
            let c01 = s[4] / n - m0 * m1;
            let var = (v0 + 2.0 * a * c01 + a * a * v1).max(0.0) * n / (n - 1.0);
            (m0 + a * m1 + a * a * self.c2[form], libm::sqrt(var / n))
        };
        let mut surf = ValueSurface {
            a_grid: a_grid.to_vec(),
            j: Vec::new(),
            j_se: Vec::new(),
            j_pathwise: Vec::new(),
            j_pathwise_se: Vec::new(),
            j_gaussian: Vec::new(),
            eval_state: Vec::new(),
            n_paths: self.acc.paths as usize,
            rc: None,
        };
        let m = self.params.m();
        let k0 = crate::sim::gain_for(&self.params, self.b0);
        for &a in a_grid {
            let (j, se) = stats(0, a);
            let (jp, sep) = stats(1, a);
            surf.j.push(j);
            surf.j_se.push(se);
            surf.j_pathwise.push(jp);
            surf.j_pathwise_se.push(sep);
            surf.j_gaussian.push(self.gaussian_j(a));
            let y0 = -self.b0 * a;
            surf.eval_state.push(EvalState { eta0: -m * k0 * y0, y0, qi0: 0.0 });
        }
        if let Some(ceiling) = self.opts.se_ceiling {
            let worst = surf.j_se.iter().chain(&surf.j_pathwise_se).fold(0.0f64, |a, b| a.max(*b));
            if !(worst <= ceiling) {
                return Err(AnalyticsError::InsufficientPaths { worst_se: worst, ceiling });
            }
        }
        surf.rc = rebalancing_cost(&surf).ok();
        Ok(surf)
    }
}

/// Public and private state at time 0 implied by `Y_{i,0} = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalState {
    pub eta0: f64,
    pub y0: f64,
    pub qi0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSurface {
    pub a_grid: Vec<f64>,
    /// Drift-form estimate and its standard error.
    pub j: Vec<f64>,
    pub j_se: Vec<f64>,
    /// Pathwise stochastic-integral estimate from the same paths.
    pub j_pathwise: Vec<f64>,
    pub j_pathwise_se: Vec<f64>,
    /// Quadrature of the exact Gaussian moments; no sampling error.
    pub j_gaussian: Vec<f64>,
    pub eval_state: Vec<EvalState>,
    pub n_paths: usize,
    /// Present when the grid contains `a_i = 0`.
    pub rc: Option<RebalancingCost>,
}

impl ValueSurface {
    /// `|J_drift - J_pathwise| / sqrt(se_drift^2 + se_pathwise^2)` at every grid point.
    pub fn form_gap_z(&self) -> Vec<f64> {
        (0..self.a_grid.len())
            .map(|k| {
                let se = libm::sqrt(self.j_se[k] * self.j_se[k] + self.j_pathwise_se[k] * self.j_pathwise_se[k]);
                let d = (self.j[k] - self.j_pathwise[k]).abs();
                if se > 0.0 {
                    d / se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Least-squares `c0 + c1 a + c2 a^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
}

impl QuadFit {
    pub fn eval(&self, a: f64) -> f64 {
        self.c0 + a * (self.c1 + a * self.c2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RebalancingCost {
    pub a_grid: Vec<f64>,
    pub rc: Vec<f64>,
    pub fit: QuadFit,
}

fn quad_fit(x: &[f64], y: &[f64]) -> QuadFit {
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for (a, v) in x.iter().zip(y) {
        let row = Vector3::new(1.0, *a, a * a);
        xtx += row * row.transpose();
        xty += row * *v;
    }
    let c = xtx.pseudo_inverse(1e-14 * xtx.norm()).map(|inv| inv * xty).unwrap_or_else(|_| Vector3::zeros());
    let fit = QuadFit { c0: c[0], c1: c[1], c2: c[2], r_squared: f64::NAN };
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, v)| (v - fit.eval(*a)) * (v - fit.eval(*a))).sum();
    QuadFit { r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 }, ..fit }
}

/// `RC(a) = J(0) - J(a)` on the drift-form estimates, plus its quadratic fit.
pub fn rebalancing_cost(surface: &ValueSurface) -> Result<RebalancingCost, AnalyticsError> {
    let base = surface.a_grid.iter().position(|a| *a == 0.0).ok_or(AnalyticsError::MissingBaseline)?;
    let j0 = surface.j[base];
    let rc: Vec<f64> = surface.j.iter().map(|j| j0 - j).collect();
    let fit = quad_fit(&surface.a_grid, &rc);
    Ok(RebalancingCost { a_grid: surface.a_grid.clone(), rc, fit })
}

/// Serial value surface; the std crate runs the same chunks in parallel.
pub fn value_function(p: &ModelParams, curves: &EquilibriumCurves, a_grid: &[f64], opts: &ValueOptions) -> Result<ValueSurface, AnalyticsError> {
    let mut plan = ValuePlan::new(p, curves, opts)?;
    for c in 0..plan.n_chunks() {
        let part = plan.run_chunk(c);
        plan.absorb(part);
    }
    plan.finish(a_grid)
}
