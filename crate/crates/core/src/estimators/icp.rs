//! Invariant Causal Prediction by exhaustive subset enumeration.
//!
//! Each candidate set `R` is fitted by pooled least squares (with intercept)
//! and rejected when any of these invariance tests rejects at level
//! `alpha / n_tests` (Bonferroni within the set):
//!
//! - Welch two-sample t-test on the residual means of the two environments,
//! - two-sided F-test on the residual variance ratio,
//! - one z-test per coefficient comparing the separate per-environment least
//!   squares fits through their standard errors.
//!
//! The empty set uses the centered response as its residual. Sets whose
//! design is singular in the pooled or any per-environment fit are rejected.
//! The estimated causal set is the intersection of all accepted sets; each of
//! its members gets the maximin coefficient, the point of the union of the
//! accepted sets' normal-theory `1 - alpha` intervals closest to zero.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use super::{check_paired_views, CoefficientVector};
use crate::dataset::EnvironmentView;
use crate::error::{Error, Result};
use crate::linalg::{mean, ols_with_intercept, sample_variance};

pub const MAX_ICP_PREDICTORS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub maximin: CoefficientVector,
    /// Accepted sets as sorted positions into the predictor list.
    pub accepted_sets: Vec<Vec<usize>>,
    /// Intersection of the accepted sets (empty when none were accepted).
    pub estimated_set: Vec<usize>,
    pub alpha: f64,
    pub sets_tested: usize,
}

struct SetFit {
    accepted: bool,
    /// Confidence interval per member of the set, keyed by position.
    intervals: Vec<(usize, f64, f64)>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn welch_pvalue(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let diff = mean(a) - mean(b);
    let se2 = va / a.len() as f64 + vb / b.len() as f64;
    if !(se2 > 0.0) {
        return if diff.abs() <= f64::EPSILON * (mean(a).abs() + mean(b).abs() + 1.0) {
            1.0
        } else {
            0.0
        };
    }
    let t = diff / se2.sqrt();
    let qa = va / a.len() as f64;
    let qb = vb / b.len() as f64;
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    match StudentsT::new(0.0, 1.0, df.max(1.0)) {
        Ok(dist) => (2.0 * dist.cdf(-t.abs())).min(1.0),
        Err(_) => 1.0,
    }
}

fn variance_ratio_pvalue(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !(va > 0.0) || !(vb > 0.0) {
        return if va == vb { 1.0 } else { 0.0 };
    }
    let dist = FisherSnedecor::new(a.len() as f64 - 1.0, b.len() as f64 - 1.0)
        .expect("positive degrees of freedom");
    let c = dist.cdf(va / vb);
    (2.0 * c.min(1.0 - c)).clamp(0.0, 1.0)
}

fn coefficient_pvalue(b1: f64, se1: f64, b2: f64, se2: f64) -> f64 {
    let denom = (se1 * se1 + se2 * se2).sqrt();
    if !(denom > 0.0) {
        return if b1 == b2 { 1.0 } else { 0.0 };
    }
    2.0 * std_normal().cdf(-((b1 - b2) / denom).abs())
}

fn evaluate_set(
    members: &[usize],
    obs: &EnvironmentView,
    intv: &EnvironmentView,
    alpha: f64,
    z_crit: f64,
) -> SetFit {
    let rejected = SetFit {
        accepted: false,
        intervals: Vec::new(),
    };
    let (n1, n2) = (obs.n_samples(), intv.n_samples());
    let y = DVector::from_iterator(
        n1 + n2,
        obs.response.iter().chain(intv.response.iter()).copied(),
    );

    let mut pvalues = Vec::with_capacity(2 + members.len());
    let mut intervals = Vec::with_capacity(members.len());
    let residuals: Vec<f64> = if members.is_empty() {
        let m = y.mean();
        y.iter().map(|v| v - m).collect()
    } else {
        let x1 = obs.design.select_columns(members);
        let x2 = intv.design.select_columns(members);
        let mut x = DMatrix::zeros(n1 + n2, members.len());
        x.view_mut((0, 0), (n1, members.len())).copy_from(&x1);
        x.view_mut((n1, 0), (n2, members.len())).copy_from(&x2);
        let Some(pooled) = ols_with_intercept(&x, &y) else {
            return rejected;
        };
        let Some(fit1) = ols_with_intercept(&x1, &obs.response) else {
            return rejected;
        };
        let Some(fit2) = ols_with_intercept(&x2, &intv.response) else {
            return rejected;
        };
        for k in 0..members.len() {
            pvalues.push(coefficient_pvalue(
                fit1.coef[k],
                fit1.se[k],
                fit2.coef[k],
                fit2.se[k],
            ));
            let half = z_crit * pooled.se[k];
            intervals.push((members[k], pooled.coef[k] - half, pooled.coef[k] + half));
        }
        pooled.residuals
    };
    let (r1, r2) = residuals.split_at(n1);
    pvalues.push(welch_pvalue(r1, r2));
    pvalues.push(variance_ratio_pvalue(r1, r2));

    let n_tests = pvalues.len() as f64;
    let min_p = pvalues.iter().copied().fold(1.0, f64::min);
    SetFit {
        accepted: min_p * n_tests >= alpha,
        intervals,
    }
}

/// Point of a union of closed intervals nearest to zero, or zero if covered.
fn closest_to_zero(intervals: &[(f64, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for &(lo, hi) in intervals {
        if lo <= 0.0 && 0.0 <= hi {
            return 0.0;
        }
        let cand = if lo > 0.0 { lo } else { hi };
        if cand.abs() < best.abs() {
            best = cand;
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

pub fn fit_icp(obs: &EnvironmentView, intv: &EnvironmentView, alpha: f64) -> Result<IcpResult> {
    check_paired_views(obs, intv)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::contract(format!("ICP level {alpha} outside (0, 1)")));
    }
    if obs.n_samples() < 2 || intv.n_samples() < 2 {
        return Err(Error::contract(
            "ICP needs at least two samples per environment",
        ));
    }
    let m = obs.n_predictors();
    if m > MAX_ICP_PREDICTORS {
        return Err(Error::contract(format!(
            "ICP enumerates subsets of at most {MAX_ICP_PREDICTORS} predictors, got {m}"
        )));
    }
    let z_crit = std_normal().inverse_cdf(1.0 - alpha / 2.0);

    let mut accepted_sets = Vec::new();
    let mut per_var: Vec<Vec<(f64, f64)>> = vec![Vec::new(); m];
    let mut intersection: u32 = (1u32 << m) - 1;
    let sets_tested = 1usize << m;
    for mask in 0..sets_tested as u32 {
        let members: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let fit = evaluate_set(&members, obs, intv, alpha, z_crit);
        if !fit.accepted {
            continue;
        }
        intersection &= mask;
        for (j, lo, hi) in fit.intervals {
            per_var[j].push((lo, hi));
        }
        accepted_sets.push(members);
    }
    let estimated_set: Vec<usize> = if accepted_sets.is_empty() {
        Vec::new()
    } else {
        (0..m).filter(|&j| intersection & (1 << j) != 0).collect()
    };

    let mut maximin = CoefficientVector::zeros(obs.predictors.clone());
    for &j in &estimated_set {
        maximin.values[j] = closest_to_zero(&per_var[j]);
    }
    Ok(IcpResult {
        maximin,
        accepted_sets,
        estimated_set,
        alpha,
        sets_tested,
    })
}
