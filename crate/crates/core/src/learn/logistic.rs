use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AfapeError, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression `P(y = 1 | x) = sigmoid(intercept + coefs . x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coefs.len());
        sigmoid(self.logit(x))
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Penalized maximum likelihood by Newton-Raphson (IRLS).
    ///
    /// `x` is row-major with `p` columns. `l2` penalizes the slopes only.
    pub fn fit(x: &[f64], p: usize, y: &[bool], weights: Option<&[f64]>, l2: f64) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(AfapeError::Empty("logistic regression data"));
        }
        if x.len() != n * p {
            return Err(AfapeError::invalid("design matrix shape mismatch"));
        }
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let k = p + 1;
        let mut beta = DVector::<f64>::zeros(k);
        // Start the intercept at the weighted log-odds.
        let (mut pos, mut tot) = (0.0, 0.0);
        for (i, &yi) in y.iter().enumerate().take(n) {
            tot += w(i);
            if yi {
                pos += w(i);
            }
        }
        if tot <= 0.0 {
            return Err(AfapeError::invalid("weights sum to zero"));
        }
        let rate = (pos / tot).clamp(1e-6, 1.0 - 1e-6);
        beta[0] = (rate / (1.0 - rate)).ln();

        let objective = |beta: &DVector<f64>| -> f64 {
            let mut ll = 0.0;
            for i in 0..n {
                let row = &x[i * p..(i + 1) * p];
                let z = beta[0] + (0..p).map(|j| beta[j + 1] * row[j]).sum::<f64>();
                // log(1 + e^z) computed stably
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                ll += w(i) * (if y[i] { z } else { 0.0 } - softplus);
            }
            let pen: f64 = (1..k).map(|j| beta[j] * beta[j]).sum();
            -ll + 0.5 * l2 * pen
        };

        let mut current = objective(&beta);
        for _ in 0..100 {
            let mut h = DMatrix::<f64>::zeros(k, k);
            let mut g = DVector::<f64>::zeros(k);
            let mut feat = vec![1.0; k];
            for i in 0..n {
                let row = &x[i * p..(i + 1) * p];
                feat[1..].copy_from_slice(row);
                let z = (0..k).map(|j| beta[j] * feat[j]).sum::<f64>();
                let mu = sigmoid(z);
                let wi = w(i);
                let r = wi * ((if y[i] { 1.0 } else { 0.0 }) - mu);
                let v = wi * mu * (1.0 - mu);
                for a in 0..k {
                    g[a] += r * feat[a];
                    for b in a..k {
                        h[(a, b)] += v * feat[a] * feat[b];
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    h[(a, b)] = h[(b, a)];
                }
            }
            for j in 1..k {
                h[(j, j)] += l2;
                g[j] -= l2 * beta[j];
            }
            // Tiny ridge on the diagonal keeps fully separable or
            // degenerate designs solvable.
            for j in 0..k {
                h[(j, j)] += 1e-10;
            }
            let delta = match h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => h.lu().solve(&g).ok_or_else(|| AfapeError::invalid("singular logistic Hessian"))?,
            };
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = &beta + &delta * step;
                let obj = objective(&cand);
                if obj <= current + 1e-12 * current.abs().max(1.0) {
                    beta = cand;
                    current = obj;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || delta.amax() * step < 1e-10 {
                break;
            }
        }
        Ok(LogisticModel {
            intercept: beta[0],
            coefs: beta.iter().skip(1).copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut rng = crate::rng::stream(&[42]);
        let n = 40_000;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let v: f64 = rng.random::<f64>() * 6.0 - 3.0;
            x.push(v);
            y.push(rng.random::<f64>() < sigmoid(-0.3 + 0.5 * v));
        }
        let m = LogisticModel::fit(&x, 1, &y, None, 0.0).unwrap();
        assert!((m.intercept + 0.3).abs() < 0.05, "{m:?}");
        assert!((m.coefs[0] - 0.5).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn intercept_only_matches_rate() {
        let y = [true, true, true, false];
        let m = LogisticModel::fit(&[], 0, &y, None, 0.0).unwrap();
        assert!((m.predict_proba(&[]) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn separable_data_stays_finite_with_penalty() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [false, false, true, true];
        let m = LogisticModel::fit(&x, 1, &y, None, 1e-2).unwrap();
        assert!(m.coefs[0].is_finite() && m.coefs[0] > 0.0);
        assert!(m.predict_proba(&[1.0]) > 0.9);
    }
}
