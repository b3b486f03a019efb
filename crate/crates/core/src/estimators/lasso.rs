//! L1-penalized least squares by cyclic coordinate descent over a geometric
//! penalty grid, with selection of the model having a fixed number of
//! nonzero coefficients.
//!
//! Objective at penalty `lambda` on standardized predictors `z` and centered
//! response `y`:
//!
//! ```text
//! (1 / 2n) * ||y - Z b||^2 + lambda * ||b||_1
//! ```
//!
//! Coefficients are reported on the original predictor scale (`b_j / sd_j`).

use nalgebra::{DMatrix, DVector};

use super::{check_paired_views, CoefficientVector};
use crate::dataset::EnvironmentView;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    pub n_lambdas: usize,
    /// Smallest penalty on the grid as a fraction of `lambda_max`.
    pub lambda_min_ratio: f64,
    /// Convergence threshold on the largest coefficient update in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            n_lambdas: 100,
            lambda_min_ratio: 1e-3,
            tolerance: 1e-7,
            max_sweeps: 100_000,
        }
    }
}

/// A full regularization path.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Original-scale coefficients, one vector per grid penalty.
    pub coefs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LassoSelection {
    /// Original-scale coefficients with at most `k` nonzeros.
    pub coefs: Vec<f64>,
    /// Penalty of the selected grid point (0 when the response is constant).
    pub lambda: f64,
    pub grid_index: usize,
    /// Nonzero count at the selected grid point before truncation to `k`.
    pub raw_nonzeros: usize,
}

struct Problem {
    n: usize,
    m: usize,
    /// Standardized design, column-major.
    z: Vec<f64>,
    /// `z_j' z_j / n`; zero marks a constant predictor that never enters.
    sq_norm: Vec<f64>,
    sd: Vec<f64>,
    y: Vec<f64>,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let (n, m) = x.shape();
        let nf = n as f64;
        let mut z = Vec::with_capacity(n * m);
        let mut sd = Vec::with_capacity(m);
        let mut sq_norm = Vec::with_capacity(m);
        for j in 0..m {
            let col = x.column(j);
            let mean = col.sum() / nf;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                let start = z.len();
                z.extend(col.iter().map(|v| (v - mean) / s));
                sq_norm.push(z[start..].iter().map(|v| v * v).sum::<f64>() / nf);
            } else {
                z.extend(std::iter::repeat_n(0.0, n));
                sq_norm.push(0.0);
            }
            sd.push(s);
        }
        let y_mean = y.sum() / nf;
        let y = y.iter().map(|v| v - y_mean).collect();
        Problem {
            n,
            m,
            z,
            sq_norm,
            sd,
            y,
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.z[j * self.n..(j + 1) * self.n]
    }

    fn lambda_max(&self) -> f64 {
        let nf = self.n as f64;
        (0..self.m)
            .filter(|&j| self.sq_norm[j] > 0.0)
            .map(|j| dot(self.col(j), &self.y).abs() / nf)
            .fold(0.0, f64::max)
    }

    fn grid(&self, settings: &LassoSettings) -> Vec<f64> {
        let lmax = self.lambda_max();
        let steps = settings.n_lambdas.max(2) - 1;
        (0..settings.n_lambdas.max(2))
            .map(|i| lmax * settings.lambda_min_ratio.powf(i as f64 / steps as f64))
            .collect()
    }

    fn sweep(&self, beta: &mut [f64], resid: &mut [f64], lambda: f64, coords: &[usize]) -> f64 {
        let nf = self.n as f64;
        let mut max_change: f64 = 0.0;
        for &j in coords {
            let q = self.sq_norm[j];
            if q == 0.0 {
                continue;
            }
            let col = self.col(j);
            let grad = dot(col, resid) / nf + q * beta[j];
            let updated = soft_threshold(grad, lambda) / q;
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Coordinate descent to convergence at one penalty, warm-started from
    /// `beta`/`resid`. Full sweeps alternate with sweeps over the active set.
    fn solve(&self, beta: &mut [f64], resid: &mut [f64], lambda: f64, settings: &LassoSettings) {
        let all: Vec<usize> = (0..self.m).collect();
        let mut sweeps = 0;
        while sweeps < settings.max_sweeps {
            sweeps += 1;
            if self.sweep(beta, resid, lambda, &all) < settings.tolerance {
                break;
            }
            let active: Vec<usize> = (0..self.m).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < settings.max_sweeps {
                sweeps += 1;
                if self.sweep(beta, resid, lambda, &active) < settings.tolerance {
                    break;
                }
            }
        }
    }

    fn original_scale(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter()
            .zip(&self.sd)
            .map(|(b, s)| if *b == 0.0 { 0.0 } else { b / s })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Computes the whole regularization path.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, settings: &LassoSettings) -> LassoPath {
    let prob = Problem::new(x, y);
    let lambdas = prob.grid(settings);
    let mut beta = vec![0.0; prob.m];
    let mut resid = prob.y.clone();
    let mut coefs = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        if lambda > 0.0 {
            prob.solve(&mut beta, &mut resid, lambda, settings);
        }
        coefs.push(prob.original_scale(&beta));
    }
    LassoPath { lambdas, coefs }
}

/// Walks the path from the largest penalty down and returns the first grid
/// point with at least `k` nonzeros. An overshoot keeps the `k`
/// largest-magnitude standardized coefficients (lower index wins ties). If
/// the grid never reaches `k`, the smallest-penalty solution is returned.
pub fn select_k(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    settings: &LassoSettings,
) -> LassoSelection {
    let prob = Problem::new(x, y);
    let lambdas = prob.grid(settings);
    if !(lambdas[0] > 0.0) {
        return LassoSelection {
            coefs: vec![0.0; prob.m],
            lambda: 0.0,
            grid_index: 0,
            raw_nonzeros: 0,
        };
    }
    let mut beta = vec![0.0; prob.m];
    let mut resid = prob.y.clone();
    let last = lambdas.len() - 1;
    for (idx, &lambda) in lambdas.iter().enumerate() {
        prob.solve(&mut beta, &mut resid, lambda, settings);
        let nnz = beta.iter().filter(|b| **b != 0.0).count();
        if nnz >= k || idx == last {
            if nnz > k {
                let mut order: Vec<usize> = (0..prob.m).collect();
                order.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
                for &j in &order[k..] {
                    beta[j] = 0.0;
                }
            }
            return LassoSelection {
                coefs: prob.original_scale(&beta),
                lambda,
                grid_index: idx,
                raw_nonzeros: nnz,
            };
        }
    }
    unreachable!("grid is never empty")
}

fn pool(obs: &EnvironmentView, intv: &EnvironmentView) -> (DMatrix<f64>, DVector<f64>) {
    let (n1, n2) = (obs.n_samples(), intv.n_samples());
    let m = obs.n_predictors();
    let mut x = DMatrix::zeros(n1 + n2, m);
    x.view_mut((0, 0), (n1, m)).copy_from(&obs.design);
    x.view_mut((n1, 0), (n2, m)).copy_from(&intv.design);
    let y = DVector::from_iterator(
        n1 + n2,
        obs.response.iter().chain(intv.response.iter()).copied(),
    );
    (x, y)
}

/// Lasso on both environments stacked, knockout labels ignored, selecting
/// the model with `k` nonzero coefficients.
pub fn fit_lasso_k(
    obs: &EnvironmentView,
    intv: &EnvironmentView,
    k: usize,
) -> Result<CoefficientVector> {
    check_paired_views(obs, intv)?;
    if obs.n_samples() + intv.n_samples() < 2 {
        return Err(Error::contract("Lasso needs at least two pooled samples"));
    }
    if k == 0 || k > obs.n_predictors() {
        return Err(Error::contract(format!(
            "cannot select {k} nonzeros from {} predictors",
            obs.n_predictors()
        )));
    }
    let (x, y) = pool(obs, intv);
    let sel = select_k(&x, &y, k, &LassoSettings::default());
    Ok(CoefficientVector::new(sel.coefs, obs.predictors.clone()))
}
