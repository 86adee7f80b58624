use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{FullDataset, SuperfeatureSchema};
use crate::error::{AfapeError, Result};
use crate::par;
use crate::rng::{self, tag};

/// Probability of the positive class given the raw feature vector.
pub fn label_probability(x: &[f64]) -> f64 {
    if x.iter().sum::<f64>() > 0.0 {
        1.0
    } else {
        0.3
    }
}

/// Lower Cholesky factor of a symmetric positive-definite covariance.
pub fn cholesky_factor(covariance: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !covariance.is_square() {
        return Err(AfapeError::NotPositiveDefinite);
    }
    let n = covariance.nrows();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (covariance[(i, j)], covariance[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(AfapeError::NotPositiveDefinite);
            }
        }
    }
    covariance
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(AfapeError::NotPositiveDefinite)
}

/// Draws `n` rows of zero-mean Gaussian features with the given covariance
/// and binary labels from [`label_probability`].
///
/// Row `r` uses random streams keyed by `(seed, r)`.
pub fn generate_synthetic(
    schema: Arc<SuperfeatureSchema>,
    n: usize,
    covariance: &DMatrix<f64>,
    seed: u64,
) -> Result<FullDataset> {
    if n == 0 {
        return Err(AfapeError::Empty("synthetic dataset"));
    }
    let d = schema.n_raw();
    if covariance.nrows() != d {
        return Err(AfapeError::invalid(format!(
            "covariance is {}x{}, schema has {d} columns",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let l = cholesky_factor(covariance)?;
    let rows = par::map_indexed(n, |r| {
        let mut frng = rng::stream(&[tag::FEATURES, seed, r as u64]);
        let z: Vec<f64> = (0..d).map(|_| frng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..d).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect();
        let mut lrng = rng::stream(&[tag::LABELS, seed, r as u64]);
        let y = (lrng.random::<f64>() < label_probability(&x)) as u32;
        (x, y)
    });
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (x, y) in rows {
        features.extend(x);
        labels.push(y);
    }
    FullDataset::new(schema, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_rule() {
        assert_eq!(label_probability(&[3.2, 0.0]), 1.0);
        assert_eq!(label_probability(&[-3.2, 0.0]), 0.3);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let s = Arc::new(SuperfeatureSchema::synthetic_default());
        let mut c = DMatrix::identity(4, 4);
        c[(1, 1)] = -1.0;
        assert!(matches!(generate_synthetic(s, 10, &c, 0), Err(AfapeError::NotPositiveDefinite)));
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let mut c = DMatrix::identity(2, 2);
        c[(0, 1)] = 0.5;
        assert!(cholesky_factor(&c).is_err());
    }

    #[test]
    fn deterministic_and_marginal_rate() {
        let s = Arc::new(SuperfeatureSchema::synthetic_default());
        let c = DMatrix::identity(4, 4);
        let a = generate_synthetic(s.clone(), 20_000, &c, 5).unwrap();
        let b = generate_synthetic(s, 20_000, &c, 5).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        let rate = a.labels().iter().filter(|&&y| y == 1).count() as f64 / 20_000.0;
        // 0.65 +- 3 sigma
        assert!((rate - 0.65).abs() < 3.0 * (0.65f64 * 0.35 / 20_000.0).sqrt(), "{rate}");
    }

    #[test]
    fn covariance_is_respected() {
        let s = Arc::new(SuperfeatureSchema::synthetic_default());
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 1.0, 1.0]));
        let a = generate_synthetic(s, 40_000, &c, 6).unwrap();
        let var0 = (0..a.n_rows()).map(|r| a.value(r, 0).powi(2)).sum::<f64>() / a.n_rows() as f64;
        assert!((var0 - 4.0).abs() < 0.15, "{var0}");
    }
}
