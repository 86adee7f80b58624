use super::estimate::{accumulate, TrajTerms, WeightInfo};
use super::{Estimate, Normalization, PROPENSITY_FLOOR};
use crate::domain::{CostSpec, CostTarget, ObservedDataset, Trajectory};
use crate::error::{AfapeError, Result};
use crate::nuisance::{PropensityModel, PropensitySource};
use crate::policy::{Classifier, Policy};
use crate::rng::tag;
use crate::simulate::Simulator;

/// Policy, classifier and costs for estimators that roll out episodes
/// themselves.
#[derive(Clone, Copy)]
pub struct RolloutContext<'a> {
    pub policy: &'a dyn Policy,
    pub classifier: &'a dyn Classifier,
    pub costs: &'a CostSpec,
    pub n_traj: usize,
    pub seed: u64,
}

fn plain_mean(name: &str, n_rows: usize, trajectories: &[Trajectory], target: CostTarget) -> Result<Estimate> {
    if trajectories.is_empty() {
        return Err(AfapeError::Empty("trajectories"));
    }
    accumulate(name.into(), target, n_rows, trajectories, 1, Normalization::Raw, |t| {
        Ok(TrajTerms {
            entries: vec![(0, t.cost(target), 1.0)],
            weight: None,
        })
    })
}

/// Mean trajectory cost of unblocked rollouts on fully observed data.
pub fn estimate_ground_truth(n_rows: usize, trajectories: &[Trajectory], target: CostTarget) -> Result<Estimate> {
    plain_mean("J", n_rows, trajectories, target)
}

/// Unweighted mean of semi-offline trajectory costs.
pub fn estimate_blocking(n_rows: usize, trajectories: &[Trajectory], target: CostTarget) -> Result<Estimate> {
    plain_mean("Blocking", n_rows, trajectories, target)
}

/// Rollouts on the data after replacing missing values with `fill`.
pub fn estimate_imp_mean(data: &ObservedDataset, fill: &[f64], ctx: &RolloutContext<'_>, target: CostTarget) -> Result<Estimate> {
    let imputed = data.impute(fill);
    let sim = Simulator::new(data.schema(), ctx.policy, ctx.classifier, ctx.costs);
    let trajs = sim.ground_truth(&imputed, ctx.n_traj, ctx.seed)?;
    plain_mean("Imp-Mean", data.n_rows(), &trajs, target)
}

fn complete_case_rollouts(data: &ObservedDataset, ctx: &RolloutContext<'_>) -> Result<Vec<Trajectory>> {
    let rows = data.complete_rows();
    if rows.is_empty() {
        return Err(AfapeError::NoCompleteCases);
    }
    Simulator::new(data.schema(), ctx.policy, ctx.classifier, ctx.costs).semi_offline_rows(
        data,
        &rows,
        ctx.n_traj,
        tag::MISS_ROLLOUT,
        ctx.seed,
    )
}

/// Mean cost over complete cases only.
pub fn estimate_cc(data: &ObservedDataset, ctx: &RolloutContext<'_>, target: CostTarget) -> Result<Estimate> {
    let trajs = complete_case_rollouts(data, ctx)?;
    accumulate("CC".into(), target, data.n_rows(), &trajs, 1, Normalization::SelfNormalized, |t| {
        Ok(TrajTerms {
            entries: vec![(0, t.cost(target), 1.0)],
            weight: None,
        })
    })
}

/// Complete cases reweighted by `1 / P(R = 1 | x)`.
pub fn estimate_ipw_miss(
    data: &ObservedDataset,
    ctx: &RolloutContext<'_>,
    propensity: &PropensityModel,
    target: CostTarget,
    normalization: Normalization,
) -> Result<Estimate> {
    let trajs = complete_case_rollouts(data, ctx)?;
    let name = match propensity.source {
        PropensitySource::GroundTruth => "IPW-Miss-gt",
        PropensitySource::Learned => "IPW-Miss",
    };
    let mut est = accumulate(name.into(), target, data.n_rows(), &trajs, 1, normalization, |t| {
        let p = propensity.prob_complete(&data.row(t.row))?;
        let w = 1.0 / p.max(PROPENSITY_FLOOR);
        Ok(TrajTerms {
            entries: vec![(0, w * t.cost(target), w)],
            weight: Some(WeightInfo {
                last: w,
                min_propensity: p,
                floored: p < PROPENSITY_FLOOR,
            }),
        })
    })?;
    // Incomplete rows carry weight zero; report the mean over all rows.
    let complete = data.complete_rows().len() as f64;
    if let Some(m) = est.diagnostics.get_mut(crate::domain::diag::MEAN_WEIGHT) {
        *m *= complete / data.n_rows() as f64;
    }
    Ok(est)
}
