use serde::{Deserialize, Serialize};

use super::ActionDistribution;
use crate::domain::{AcquisitionState, Action, SuperfeatureSchema};

/// Acquires each costly superfeature independently with probability
/// `p_acquire`, in uniformly random order, then stops.
///
/// The step-wise conditionals depend on the state only through the number
/// of acquisitions so far and the set of remaining candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetRandomPolicy {
    pub p_acquire: f64,
}

/// `w(t, m) = sum_k C(m,k) p^(t+k) (1-p)^(m-k) k!/(t+k)!`
fn weight(p: f64, t: usize, m: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for k in 0..=m {
        if k > 0 {
            binom *= (m - k + 1) as f64 / k as f64;
        }
        // k!/(t+k)! = 1 / ((k+1)(k+2)...(k+t))
        let ratio: f64 = (1..=t).map(|i| 1.0 / (k + i) as f64).product();
        total += binom * p.powi((t + k) as i32) * (1.0 - p).powi((m - k) as i32) * ratio;
    }
    total
}

impl SubsetRandomPolicy {
    pub fn new(p_acquire: f64) -> Self {
        SubsetRandomPolicy { p_acquire }
    }

    /// Returns `(P(any specific candidate), P(STOP))` after `t`
    /// acquisitions with `m` candidates remaining.
    pub fn conditionals(&self, t: usize, m: usize) -> (f64, f64) {
        let p = self.p_acquire;
        let w = weight(p, t, m);
        if w <= 0.0 {
            // Unreachable state under this policy.
            return (0.0, 1.0);
        }
        let each = if m == 0 { 0.0 } else { weight(p, t + 1, m - 1) / w };
        let factorial: f64 = (1..=t).map(|i| i as f64).product();
        let stop = p.powi(t as i32) * (1.0 - p).powi(m as i32) / (factorial * w);
        (each, stop)
    }

    pub fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        let n = schema.n_super();
        let costly = schema.costly();
        let remaining = costly.difference(state.acquired());
        let t = costly.intersection(state.acquired()).count();
        let (each, stop) = self.conditionals(t, remaining.count());
        let mut probs = vec![0.0; n + 1];
        for j in remaining.iter() {
            probs[j] = each;
        }
        probs[Action::Stop.index(n)] = stop;
        ActionDistribution::from_probs(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate() {
        let (each, stop) = SubsetRandomPolicy::new(0.3).conditionals(0, 1);
        assert!((each - 0.3).abs() < 1e-12);
        assert!((stop - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_candidates_half() {
        let (each, stop) = SubsetRandomPolicy::new(0.5).conditionals(0, 2);
        assert!((each - 0.375).abs() < 1e-12);
        assert!((stop - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_always_stops() {
        for t in 0..3 {
            for m in 0..4 {
                assert_eq!(SubsetRandomPolicy::new(0.0).conditionals(t, m).1, 1.0);
            }
        }
    }

    #[test]
    fn certain_acquisition_never_stops_early() {
        let pol = SubsetRandomPolicy::new(1.0);
        assert_eq!(pol.conditionals(1, 2).1, 0.0);
        assert_eq!(pol.conditionals(3, 0).1, 1.0);
    }

    #[test]
    fn conditionals_sum_to_one() {
        for &p in &[0.1, 0.37, 0.9] {
            for t in 0..5 {
                for m in 0..6 {
                    let (each, stop) = SubsetRandomPolicy::new(p).conditionals(t, m);
                    assert!((m as f64 * each + stop - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
