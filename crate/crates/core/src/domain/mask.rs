use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest number of superfeatures a schema may declare.
pub const MAX_SUPERFEATURES: usize = 64;

/// A set of superfeature indices stored as a bitset.
///
/// Used both for missingness indicators `R` of a retrospective row and for
/// the set of superfeatures acquired so far in an episode.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuperMask(u64);

impl SuperMask {
    pub const EMPTY: SuperMask = SuperMask(0);

    pub fn from_bits(bits: u64) -> Self {
        SuperMask(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// All of `0..d`.
    pub fn full(d: usize) -> Self {
        assert!(d <= MAX_SUPERFEATURES);
        if d == 64 {
            SuperMask(u64::MAX)
        } else {
            SuperMask((1u64 << d) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(SuperMask::EMPTY, |m, i| m.with(i))
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_SUPERFEATURES && self.0 & (1u64 << i) != 0
    }

    #[must_use]
    pub fn with(self, i: usize) -> Self {
        assert!(i < MAX_SUPERFEATURES, "superfeature index {i} out of range");
        SuperMask(self.0 | (1u64 << i))
    }

    #[must_use]
    pub fn without(self, i: usize) -> Self {
        SuperMask(self.0 & !(1u64 << i))
    }

    pub fn insert(&mut self, i: usize) {
        *self = self.with(i);
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Elementwise `self >= other`.
    pub fn is_superset_of(self, other: SuperMask) -> bool {
        self.0 & other.0 == other.0
    }

    #[must_use]
    pub fn union(self, other: SuperMask) -> Self {
        SuperMask(self.0 | other.0)
    }

    #[must_use]
    pub fn intersection(self, other: SuperMask) -> Self {
        SuperMask(self.0 & other.0)
    }

    #[must_use]
    pub fn difference(self, other: SuperMask) -> Self {
        SuperMask(self.0 & !other.0)
    }

    /// Indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Debug for SuperMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
