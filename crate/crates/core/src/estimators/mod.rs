//! Cost estimators, bootstrap intervals and positivity diagnostics.
//!
//! Every estimator produces an [`Estimate`]: per-row terms whose
//! combination gives the point estimate. Bootstrap intervals and
//! convergence curves re-combine the stored terms without refitting or
//! re-simulating anything.

mod baselines;
mod bootstrap;
mod diagnostics;
mod estimate;
mod semi;
mod terms;
mod weights;

pub use baselines::{
    estimate_blocking, estimate_cc, estimate_ground_truth, estimate_imp_mean, estimate_ipw_miss, RolloutContext,
};
pub use bootstrap::{bootstrap_ci, BootstrapConfig};
pub use diagnostics::positivity_diagnostics;
pub use estimate::Estimate;
pub use semi::{
    estimate_dm_semi, estimate_drl_semi, estimate_ipw_semi, estimate_ipw_semi_clipped, estimate_ipw_semi_miss,
};
pub use terms::TermTable;
pub use weights::{weight_series, Normalization, WeightSeries, PROPENSITY_FLOOR};
