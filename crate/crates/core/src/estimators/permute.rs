use rand::seq::SliceRandom;
use rand::Rng;

use super::CoefficientVector;

/// Permuted-Lasso baseline: shuffles the nonzero values uniformly among the
/// nonzero positions. Zeros stay in place.
pub fn fit_l1r<R: Rng + ?Sized>(lasso: &CoefficientVector, rng: &mut R) -> CoefficientVector {
    let support = lasso.support();
    let mut values: Vec<f64> = support.iter().map(|&i| lasso.values[i]).collect();
    values.shuffle(rng);
    let mut out = CoefficientVector::zeros(lasso.predictor_genes.clone());
    for (&i, v) in support.iter().zip(values) {
        out.values[i] = v;
    }
    out
}
