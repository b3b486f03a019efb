use nalgebra::{DMatrix, DVector};

/// Reciprocal-condition cutoff shared by every small dense solve.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from singular values; infinite when rank deficient.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || !(min > 0.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ordinary least squares with an intercept column prepended.
#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    /// Slopes only, intercept dropped.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub(crate) fn ols_with_intercept(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let n = x.nrows();
    let q = x.ncols() + 1;
    if n <= q {
        return None;
    }
    let mut design = DMatrix::from_element(n, q, 1.0);
    design.view_mut((0, 1), (n, q - 1)).copy_from(x);

    let xtx = design.transpose() * &design;
    if condition_number(&xtx) > MAX_CONDITION {
        return None;
    }
    let inv = xtx.try_inverse()?;
    let beta = &inv * (design.transpose() * y);
    let fitted = &design * &beta;
    let residuals: Vec<f64> = (y - fitted).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2 = rss / (n - q) as f64;
    let se = (1..q)
        .map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt())
        .collect();
    Some(OlsFit {
        coef: beta.iter().skip(1).copied().collect(),
        se,
        residuals,
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}
