//! Coefficient estimators mapping an (observational, interventional) pair of
//! environment views to one coefficient per candidate predictor gene.

mod dantzig;
mod icp;
mod lasso;
mod permute;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::EnvironmentView;
use crate::error::{Error, Result};

pub use dantzig::{causal_dantzig_raw, fit_causal_dantzig, CD_MAX_CONDITION};
pub use icp::{fit_icp, IcpResult, MAX_ICP_PREDICTORS};
pub use lasso::{fit_lasso_k, lasso_path, select_k, LassoPath, LassoSelection, LassoSettings};
pub use permute::fit_l1r;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    pub predictor_genes: Vec<usize>,
}

impl CoefficientVector {
    pub fn new(values: Vec<f64>, predictor_genes: Vec<usize>) -> Self {
        debug_assert_eq!(values.len(), predictor_genes.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        CoefficientVector {
            values,
            predictor_genes,
        }
    }

    pub fn zeros(predictor_genes: Vec<usize>) -> Self {
        CoefficientVector {
            values: vec![0.0; predictor_genes.len()],
            predictor_genes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Positions of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i] != 0.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    L1,
    L1R,
    CD,
    ICP,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::L1, Estimator::L1R, Estimator::CD, Estimator::ICP];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::L1 => "L1",
            Estimator::L1R => "L1R",
            Estimator::CD => "CD",
            Estimator::ICP => "ICP",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" | "LASSO" => Ok(Estimator::L1),
            "L1R" => Ok(Estimator::L1R),
            "CD" => Ok(Estimator::CD),
            "ICP" => Ok(Estimator::ICP),
            other => Err(Error::validation(format!(
                "unknown estimator {other:?} (expected L1, L1R, CD or ICP)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub coefficients: CoefficientVector,
    /// True when CD was singular or ICP abstained and the permuted-Lasso
    /// coefficients were substituted.
    pub fell_back: bool,
}

/// Fits `estimator` on views already restricted to the Lasso-preselected
/// predictors. `lasso` is the Lasso fit on those predictors and `l1r` its
/// permutation; CD singularity and ICP abstention both fall back to `l1r`.
pub fn fit_with_fallback(
    estimator: Estimator,
    obs: &EnvironmentView,
    intv: &EnvironmentView,
    lasso: &CoefficientVector,
    l1r: &CoefficientVector,
    alpha: f64,
) -> Result<FitOutcome> {
    let done = |coefficients: CoefficientVector| FitOutcome {
        coefficients,
        fell_back: false,
    };
    let fallback = || FitOutcome {
        coefficients: l1r.clone(),
        fell_back: true,
    };
    match estimator {
        Estimator::L1 => Ok(done(lasso.clone())),
        Estimator::L1R => Ok(done(l1r.clone())),
        Estimator::CD => match fit_causal_dantzig(obs, intv) {
            Ok(c) => Ok(done(c)),
            Err(Error::Singular { .. }) => Ok(fallback()),
            Err(e) => Err(e),
        },
        Estimator::ICP => {
            let res = fit_icp(obs, intv, alpha)?;
            if res.maximin.is_all_zero() {
                Ok(fallback())
            } else {
                Ok(done(res.maximin))
            }
        }
    }
}

pub(crate) fn check_paired_views(obs: &EnvironmentView, intv: &EnvironmentView) -> Result<()> {
    if obs.predictors != intv.predictors {
        return Err(Error::contract(
            "observational and interventional views have different predictor columns",
        ));
    }
    Ok(())
}
