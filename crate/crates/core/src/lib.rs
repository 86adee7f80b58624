//! Off-policy evaluation of active feature acquisition policies from
//! retrospective data in which some features are missing.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`]: schemas, masks, datasets, trajectories and reports.
//! * [`learn`]: small learners (logistic, ridge, tabular, MLP).
//! * [`datagen`]: synthetic generation, missingness mechanisms and CSV I/O.
//! * [`policy`]: acquisition policies, blocking and classifiers.
//! * [`simulate`]: semi-offline and ground-truth rollouts.
//! * [`nuisance`]: propensity models and fitted Q-functions.
//! * [`estimators`]: the cost estimators and bootstrap intervals.
//! * [`harness`]: experiment configuration, runs and the oracle suite.

pub mod datagen;
pub mod domain;
pub mod estimators;
pub mod checkpoint;
mod error;
pub mod harness;
pub mod learn;
pub mod nuisance;
mod par;
pub mod policy;
pub mod rng;
pub mod simulate;

pub use error::{AfapeError, Result};
