use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AfapeError, Result};

/// Weighted ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn fit(x: &[f64], p: usize, y: &[f64], weights: Option<&[f64]>, lambda: f64) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(AfapeError::Empty("ridge regression data"));
        }
        if x.len() != n * p {
            return Err(AfapeError::invalid("design matrix shape mismatch"));
        }
        let k = p + 1;
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        let mut feat = vec![1.0; k];
        for i in 0..n {
            feat[1..].copy_from_slice(&x[i * p..(i + 1) * p]);
            let wi = weights.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            for r in 0..k {
                b[r] += wi * feat[r] * y[i];
                for c in r..k {
                    a[(r, c)] += wi * feat[r] * feat[c];
                }
            }
        }
        for r in 0..k {
            for c in 0..r {
                a[(r, c)] = a[(c, r)];
            }
        }
        for j in 1..k {
            a[(j, j)] += lambda;
        }
        for j in 0..k {
            a[(j, j)] += 1e-12;
        }
        let beta = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a
                .pseudo_inverse(1e-12)
                .map_err(|e| AfapeError::invalid(format!("ridge solve failed: {e}")))?
                * b,
        };
        Ok(RidgeModel {
            intercept: beta[0],
            coefs: beta.iter().skip(1).copied().collect(),
        })
    }
}
