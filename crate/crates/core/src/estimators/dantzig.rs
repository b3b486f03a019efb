//! Unregularized Causal Dantzig: solves `(G1 - G2) b = h1 - h2` where
//! `Ge = Xe'Xe / ne` and `he = Xe'Ye / ne` are per-environment second
//! moments. No centering is applied.

use nalgebra::{DMatrix, DVector};

use super::{check_paired_views, CoefficientVector};
use crate::dataset::EnvironmentView;
use crate::error::{Error, Result};
use crate::linalg::condition_number;

pub const CD_MAX_CONDITION: f64 = 1e12;

fn moments(view: &EnvironmentView) -> (DMatrix<f64>, DVector<f64>) {
    let n = view.n_samples() as f64;
    let xt = view.design.transpose();
    (&xt * &view.design / n, &xt * &view.response / n)
}

/// Solves the moment-difference system directly from raw matrices.
pub fn causal_dantzig_raw(
    x1: &DMatrix<f64>,
    y1: &DVector<f64>,
    x2: &DMatrix<f64>,
    y2: &DVector<f64>,
) -> Result<DVector<f64>> {
    let v1 = EnvironmentView {
        design: x1.clone(),
        response: y1.clone(),
        env: crate::dataset::Environment::Observational,
        predictors: (0..x1.ncols()).collect(),
    };
    let v2 = EnvironmentView {
        design: x2.clone(),
        response: y2.clone(),
        env: crate::dataset::Environment::Interventional,
        predictors: (0..x2.ncols()).collect(),
    };
    solve(&v1, &v2)
}

fn solve(obs: &EnvironmentView, intv: &EnvironmentView) -> Result<DVector<f64>> {
    if obs.n_samples() == 0 || intv.n_samples() == 0 {
        return Err(Error::contract(
            "Causal Dantzig needs samples in both environments",
        ));
    }
    if obs.n_predictors() == 0 || obs.n_predictors() != intv.n_predictors() {
        return Err(Error::contract(
            "Causal Dantzig needs matching, nonempty predictor sets",
        ));
    }
    let (g1, h1) = moments(obs);
    let (g2, h2) = moments(intv);
    let gram_diff = g1 - g2;
    let rhs = h1 - h2;
    let condition = condition_number(&gram_diff);
    if !(condition <= CD_MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let beta = gram_diff
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular { condition })?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Singular { condition });
    }
    Ok(beta)
}

pub fn fit_causal_dantzig(
    obs: &EnvironmentView,
    intv: &EnvironmentView,
) -> Result<CoefficientVector> {
    check_paired_views(obs, intv)?;
    let beta = solve(obs, intv)?;
    Ok(CoefficientVector::new(
        beta.iter().copied().collect(),
        obs.predictors.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Environment;
    use crate::seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn view(x: DMatrix<f64>, y: DVector<f64>, env: Environment) -> EnvironmentView {
        let m = x.ncols();
        EnvironmentView {
            design: x,
            response: y,
            env,
            predictors: (0..m).collect(),
        }
    }

    #[test]
    fn identical_environments_are_singular() {
        let mut rng = seed::rng(1);
        let x = DMatrix::from_fn(50, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = view(x.clone(), y.clone(), Environment::Observational);
        let b = view(x, y, Environment::Interventional);
        assert!(matches!(
            fit_causal_dantzig(&a, &b),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn empty_environment_is_a_contract_error() {
        let a = view(
            DMatrix::from_element(3, 1, 1.0),
            DVector::from_element(3, 1.0),
            Environment::Observational,
        );
        let b = view(
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            Environment::Interventional,
        );
        assert!(matches!(
            fit_causal_dantzig(&a, &b),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn swapping_environments_is_exact() {
        let mut rng = seed::rng(2);
        let x1 = DMatrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x2 = DMatrix::from_fn(30, 3, |_, j| {
            rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64)
        });
        let y1 = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y2 = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ab = causal_dantzig_raw(&x1, &y1, &x2, &y2).unwrap();
        let ba = causal_dantzig_raw(&x2, &y2, &x1, &y1).unwrap();
        assert_eq!(ab, ba);
    }
}
