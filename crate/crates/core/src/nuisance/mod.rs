//! Nuisance models: missingness propensities and the semi-offline
//! Q-function.

mod propensity;
mod qfunction;

pub use propensity::{
    fit_propensity_mar, fit_propensity_mnar_pattern, Corruption, PropensityFactor, PropensityModel,
    PropensitySource,
};
pub use qfunction::{fit_q_semi, QFitConfig, QHeads, QModel, QProblem};
