//! Acquisition policies, blocking, and label classifiers.

mod classifier;
mod distribution;
mod encode;
mod greedy;
mod random;

pub use classifier::{
    fit_classifier, AnyClassifier, Classifier, ClassifierConfig, ImputeLogisticClassifier, MajorityClassifier,
};
pub use distribution::{block_policy, ActionDistribution};
pub use encode::{encode_state, state_width};
pub use greedy::{fit_greedy_policy, GreedyConfig, GreedyPolicy};
pub use random::SubsetRandomPolicy;

use serde::{Deserialize, Serialize};

use crate::domain::{AcquisitionState, Action, SuperfeatureSchema};

/// A (possibly stochastic) acquisition policy. Free and already acquired
/// superfeatures must receive probability zero.
pub trait Policy: Send + Sync {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution;
}

/// Acquires the listed superfeatures in order, skipping ones already
/// acquired, then stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedOrderPolicy {
    pub order: Vec<usize>,
}

impl Policy for FixedOrderPolicy {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        let n = schema.n_super();
        let next = self
            .order
            .iter()
            .copied()
            .find(|&j| j < n && schema.costly().contains(j) && !state.acquired().contains(j));
        ActionDistribution::deterministic(n, next.map_or(Action::Stop, Action::Acquire))
    }
}

impl Policy for SubsetRandomPolicy {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        SubsetRandomPolicy::distribution(self, schema, state)
    }
}

impl Policy for GreedyPolicy {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        GreedyPolicy::distribution(self, schema, state)
    }
}

/// Serializable union of the shipped policy classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyPolicy {
    SubsetRandom(SubsetRandomPolicy),
    StopAlways,
    FixedOrder(FixedOrderPolicy),
    Greedy(GreedyPolicy),
}

impl AnyPolicy {
    pub fn restore(self) -> Self {
        match self {
            AnyPolicy::Greedy(g) => AnyPolicy::Greedy(g.restore()),
            other => other,
        }
    }

    /// Whether this policy gives positive probability to every action that
    /// `target` might take (needed when it serves as the simulation policy).
    ///
    /// Checked structurally for the shipped classes; `None` means unknown.
    pub fn covers(&self, target: &AnyPolicy) -> Option<bool> {
        use AnyPolicy::*;
        match (self, target) {
            (SubsetRandom(s), SubsetRandom(t)) => Some(
                (s.p_acquire > 0.0 || t.p_acquire == 0.0) && (s.p_acquire < 1.0 || t.p_acquire == 1.0),
            ),
            (SubsetRandom(s), StopAlways) => Some(s.p_acquire < 1.0),
            (SubsetRandom(s), _) => Some(s.p_acquire > 0.0 && s.p_acquire < 1.0),
            (a, b) if a == b => Some(true),
            _ => None,
        }
    }
}

impl Policy for AnyPolicy {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        match self {
            AnyPolicy::SubsetRandom(p) => p.distribution(schema, state),
            AnyPolicy::StopAlways => ActionDistribution::stop_only(schema.n_super()),
            AnyPolicy::FixedOrder(p) => Policy::distribution(p, schema, state),
            AnyPolicy::Greedy(p) => p.distribution(schema, state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SuperMask;

    #[test]
    fn fixed_order_skips_acquired() {
        let s = SuperfeatureSchema::synthetic_default();
        let src = vec![Some(0.0); 4];
        let st = AcquisitionState::with_acquired(&s, SuperMask::from_indices([0, 2]), &src);
        let p = FixedOrderPolicy { order: vec![2, 1] };
        assert_eq!(Policy::distribution(&p, &s, &st).prob(Action::Acquire(1)), 1.0);
    }

    #[test]
    fn subset_random_is_order_free() {
        let s = SuperfeatureSchema::singletons((0..4).map(|i| format!("c{i}")).collect(), &[0.0, 1.0, 1.0, 1.0]).unwrap();
        let src = vec![Some(1.0); 4];
        let pol = AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(0.4));
        let mut a = AcquisitionState::initial(&s, &src);
        a.reveal(&s, 1, &src);
        a.reveal(&s, 3, &src);
        let mut b = AcquisitionState::initial(&s, &src);
        b.reveal(&s, 3, &src);
        b.reveal(&s, 1, &src);
        assert_eq!(pol.distribution(&s, &a), pol.distribution(&s, &b));
        let d = pol.distribution(&s, &a);
        assert_eq!(d.prob(Action::Acquire(0)), 0.0);
        assert_eq!(d.prob(Action::Acquire(1)), 0.0);
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_rules() {
        let r = |p| AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(p));
        assert_eq!(r(0.5).covers(&r(0.1)), Some(true));
        assert_eq!(r(0.0).covers(&r(0.1)), Some(false));
        assert_eq!(r(1.0).covers(&AnyPolicy::StopAlways), Some(false));
    }

    #[test]
    fn serde_tags() {
        let p = AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(0.1));
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"kind":"subset_random","p_acquire":0.1}"#);
        let back: AnyPolicy = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
