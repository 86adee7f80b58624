use serde::{Deserialize, Serialize};

use super::mask::SuperMask;
use super::schema::SuperfeatureSchema;

/// Acquire a (costly) superfeature or stop and predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Acquire(usize),
    Stop,
}

impl Action {
    /// Position in an [`ActionDistribution`](crate::policy::ActionDistribution)
    /// over `n_super` superfeatures (STOP is last).
    pub fn index(self, n_super: usize) -> usize {
        match self {
            Action::Acquire(j) => j,
            Action::Stop => n_super,
        }
    }

    pub fn from_index(i: usize, n_super: usize) -> Action {
        if i == n_super {
            Action::Stop
        } else {
            Action::Acquire(i)
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Acquire(j) => write!(f, "{j}"),
            Action::Stop => f.write_str("STOP"),
        }
    }
}

/// What the agent knows after `step` acquisitions: the acquired set
/// (including the free set) and the revealed raw values.
///
/// Acquisition order is deliberately not part of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionState {
    acquired: SuperMask,
    values: Vec<Option<f64>>,
    step: usize,
}

impl AcquisitionState {
    /// Reveals the free set from `source`.
    ///
    /// Panics if a free value is missing in `source`; datasets guarantee
    /// free superfeatures are always observed.
    pub fn initial(schema: &SuperfeatureSchema, source: &[Option<f64>]) -> Self {
        let mut state = AcquisitionState {
            acquired: SuperMask::EMPTY,
            values: vec![None; schema.n_raw()],
            step: 0,
        };
        for j in schema.free().iter() {
            state.copy_columns(schema, j, source);
            state.acquired.insert(j);
        }
        state
    }

    /// State with an explicit acquired set, revealing its values from `source`.
    pub fn with_acquired(schema: &SuperfeatureSchema, acquired: SuperMask, source: &[Option<f64>]) -> Self {
        let mut state = Self::initial(schema, source);
        for j in acquired.difference(schema.free()).iter() {
            state.reveal(schema, j, source);
        }
        state
    }

    pub fn reveal(&mut self, schema: &SuperfeatureSchema, j: usize, source: &[Option<f64>]) {
        assert!(!self.acquired.contains(j), "superfeature {j} acquired twice");
        self.copy_columns(schema, j, source);
        self.acquired.insert(j);
        self.step += 1;
    }

    fn copy_columns(&mut self, schema: &SuperfeatureSchema, j: usize, source: &[Option<f64>]) {
        for &c in schema.columns_of(j) {
            let v = source[c].unwrap_or_else(|| panic!("column {c} revealed but not available"));
            self.values[c] = Some(v);
        }
    }

    pub fn acquired(&self) -> SuperMask {
        self.acquired
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn step(&self) -> usize {
        self.step
    }
}
