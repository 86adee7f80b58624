use rand::Rng;

use crate::domain::{Action, SuperMask};

/// Probabilities over `Acquire(0..n_super)` followed by STOP.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
    forced: bool,
}

impl ActionDistribution {
    /// Builds a distribution from unnormalized nonnegative masses.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| *p >= 0.0 && p.is_finite()));
        debug_assert!(!probs.is_empty());
        ActionDistribution { probs, forced: false }
    }

    pub fn stop_only(n_super: usize) -> Self {
        let mut probs = vec![0.0; n_super + 1];
        probs[n_super] = 1.0;
        ActionDistribution::from_probs(probs)
    }

    /// All mass on one action.
    pub fn deterministic(n_super: usize, action: Action) -> Self {
        let mut probs = vec![0.0; n_super + 1];
        probs[action.index(n_super)] = 1.0;
        ActionDistribution::from_probs(probs)
    }

    pub fn n_super(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, action: Action) -> f64 {
        self.probs[action.index(self.n_super())]
    }

    pub fn stop(&self) -> f64 {
        self.probs[self.n_super()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Set when blocking removed every action with positive mass.
    pub fn is_forced(&self) -> bool {
        self.forced
    }

    /// Actions with positive probability, with their probabilities.
    pub fn support(&self) -> impl Iterator<Item = (Action, f64)> + '_ {
        let n = self.n_super();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(i, p)| (Action::from_index(i, n), *p))
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        let n = self.n_super();
        let mut acc = 0.0;
        let mut last = None;
        for (i, p) in self.probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(i);
            if u < acc {
                return Action::from_index(i, n);
            }
        }
        // Rounding left u above the accumulated total.
        Action::from_index(last.unwrap_or(n), n)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Removes acquisitions of superfeatures outside `available` and
/// renormalizes the rest, STOP included.
///
/// When nothing with positive mass survives, returns STOP with probability
/// one and marks the result as forced.
pub fn block_policy(base: &ActionDistribution, available: SuperMask) -> ActionDistribution {
    let n = base.n_super();
    let mut probs = base.probs.clone();
    let mut blocked = false;
    for (j, p) in probs.iter_mut().enumerate().take(n) {
        if !available.contains(j) && *p > 0.0 {
            *p = 0.0;
            blocked = true;
        }
    }
    // Leave the distribution bit-identical when nothing is removed.
    if !blocked {
        return ActionDistribution { probs, forced: false };
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        let mut out = ActionDistribution::stop_only(n);
        out.forced = true;
        return out;
    }
    probs.iter_mut().for_each(|p| *p /= total);
    ActionDistribution { probs, forced: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocking_renormalizes_proportionally() {
        let base = ActionDistribution::from_probs(vec![0.0, 0.4, 0.4, 0.2]);
        let out = block_policy(&base, SuperMask::from_indices([0, 1]));
        assert!((out.prob(Action::Acquire(1)) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.prob(Action::Acquire(2)), 0.0);
        assert!((out.stop() - 1.0 / 3.0).abs() < 1e-12);
        assert!(!out.is_forced());
    }

    #[test]
    fn nothing_blocked_is_identity() {
        let base = ActionDistribution::from_probs(vec![0.0, 0.4, 0.4, 0.2]);
        assert_eq!(block_policy(&base, SuperMask::full(3)), base);
    }

    #[test]
    fn everything_blocked_forces_stop() {
        let base = ActionDistribution::from_probs(vec![0.0, 0.0, 1.0, 0.0]);
        let out = block_policy(&base, SuperMask::from_indices([0, 1]));
        assert_eq!(out.stop(), 1.0);
        assert!(out.is_forced());
    }

    #[test]
    fn sampling_follows_probabilities() {
        let d = ActionDistribution::from_probs(vec![0.25, 0.0, 0.75]);
        let mut rng = crate::rng::stream(&[3]);
        let n = 20_000;
        let k = (0..n).filter(|_| d.sample(&mut rng) == Action::Acquire(0)).count();
        assert!((k as f64 / n as f64 - 0.25).abs() < 0.015);
    }
}
