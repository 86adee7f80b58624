use super::estimate::{accumulate, TrajTerms, WeightInfo};
use super::{weight_series, Estimate, Normalization, WeightSeries, PROPENSITY_FLOOR};
use crate::domain::{Action, CostTarget, ObservedDataset, SuperMask, Trajectory};
use crate::error::{AfapeError, Result};
use crate::nuisance::{PropensityModel, PropensitySource, QModel};
use crate::par;
use crate::policy::Policy;

fn suffix(p: &PropensityModel) -> &'static str {
    match p.source {
        PropensitySource::GroundTruth => "-gt",
        PropensitySource::Learned => "",
    }
}

fn groups_for(trajectories: &[Trajectory]) -> usize {
    trajectories.iter().map(Trajectory::len).max().unwrap_or(0) + 1
}

fn inevaluable(e: AfapeError) -> AfapeError {
    match e {
        AfapeError::Inevaluable(msg) => AfapeError::Inevaluable(format!(
            "{msg}; the missingness depends on values that can be missing, use the hybrid estimator (IPW-Semi-Miss)"
        )),
        other => other,
    }
}

fn info(ws: &WeightSeries) -> WeightInfo {
    WeightInfo {
        last: ws.last(),
        min_propensity: ws.min_propensity,
        floored: ws.floored,
    }
}

/// Per-decision terms `(k, rho_k C_k, rho_min(k,T))` for `k = 0..groups`.
fn ipw_entries(traj: &Trajectory, ws: &WeightSeries, target: CostTarget, groups: usize, clip: Option<f64>) -> Vec<(usize, f64, f64)> {
    let w = |k: usize| {
        let r = ws.at(k);
        clip.map_or(r, |c| r.min(c))
    };
    let mut out = Vec::with_capacity(groups);
    out.push((0, 0.0, w(0)));
    for k in 1..groups {
        let a = if k <= traj.len() { w(k) * traj.step_cost(k, target) } else { 0.0 };
        out.push((k, a, w(k)));
    }
    out
}

fn ipw_impl(
    name: String,
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
    target: CostTarget,
    normalization: Normalization,
    clip: Option<f64>,
) -> Result<Estimate> {
    let groups = groups_for(trajectories);
    accumulate(name, target, data.n_rows(), trajectories, groups, normalization, |traj| {
        let row = data.row(traj.row);
        let ws = weight_series(traj, &row, propensity, 1.0, SuperMask::EMPTY).map_err(inevaluable)?;
        Ok(TrajTerms {
            entries: ipw_entries(traj, &ws, target, groups, clip),
            weight: Some(info(&ws)),
        })
    })
}

/// Importance-weighted mean of semi-offline trajectory costs.
pub fn estimate_ipw_semi(
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
    target: CostTarget,
    normalization: Normalization,
) -> Result<Estimate> {
    let name = format!("IPW-Semi{}", suffix(propensity));
    ipw_impl(name, data, trajectories, propensity, target, normalization, None)
}

/// Diagnostic-only variant with every cumulative weight capped at `cap`.
pub fn estimate_ipw_semi_clipped(
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
    target: CostTarget,
    normalization: Normalization,
    cap: f64,
) -> Result<Estimate> {
    let name = format!("IPW-Semi{}-clipped", suffix(propensity));
    ipw_impl(name, data, trajectories, propensity, target, normalization, Some(cap))
}

/// Mean over rows of `V(initial state)`.
pub fn estimate_dm_semi(data: &ObservedDataset, q: &QModel, policy: &dyn Policy) -> Result<Estimate> {
    let schema = data.schema();
    let values = par::map_indexed(data.n_rows(), |r| {
        let state = crate::domain::AcquisitionState::initial(schema, &data.row(r));
        q.v(schema, policy, &state)
    });
    let mut table = super::TermTable::zeros(data.n_rows(), 1, Normalization::Raw);
    for (r, v) in values.into_iter().enumerate() {
        table.add(r, 0, v, 1.0);
    }
    Ok(Estimate {
        estimator: "DM-Semi".into(),
        target: q.target,
        terms: table,
        n_trajectories: 0,
        diagnostics: Default::default(),
    })
}

/// Doubly robust estimator: importance-weighted costs plus the fitted-Q
/// control variates `-rho_t Q_t + rho_{t-1} V_{t-1}`.
pub fn estimate_drl_semi(
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
    q: &QModel,
    policy: &dyn Policy,
    normalization: Normalization,
) -> Result<Estimate> {
    let schema = data.schema();
    let target = q.target;
    let groups = groups_for(trajectories);
    let name = format!("DRL-Semi{}", suffix(propensity));
    accumulate(name, target, data.n_rows(), trajectories, groups, normalization, |traj| {
        let row = data.row(traj.row);
        let ws = weight_series(traj, &row, propensity, 1.0, SuperMask::EMPTY).map_err(inevaluable)?;
        let states = traj.states(schema, &row);
        let mut entries = Vec::with_capacity(groups);
        entries.push((0, ws.rho[0] * q.v(schema, policy, &states[0]), ws.rho[0]));
        for k in 1..groups {
            if k > traj.len() {
                entries.push((k, 0.0, ws.at(k)));
                continue;
            }
            let step = &traj.steps[k - 1];
            let q_k = q.q(schema, &states[k - 1], step.action);
            let v_k = match step.action {
                Action::Acquire(_) => q.v(schema, policy, &states[k]),
                Action::Stop => 0.0,
            };
            let rho = ws.rho[k];
            let a = if rho == 0.0 { 0.0 } else { rho * (traj.step_cost(k, target) - q_k + v_k) };
            entries.push((k, a, rho));
        }
        Ok(TrajTerms {
            entries,
            weight: Some(info(&ws)),
        })
    })
}

/// Hybrid estimator for missingness that depends on the possibly missing
/// `adjustment` superfeatures: the missing-data weight
/// `I(R_adj = 1) / P(R_adj = 1 | x)` times semi-offline weights whose
/// propensities condition on the adjustment values.
pub fn estimate_ipw_semi_miss(
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
    adjustment: SuperMask,
    target: CostTarget,
    normalization: Normalization,
) -> Result<Estimate> {
    if adjustment.is_empty() {
        return Err(AfapeError::invalid(
            "empty adjustment set; use the plain semi-offline estimator",
        ));
    }
    let groups = groups_for(trajectories);
    let name = format!("IPW-Semi-Miss{}", suffix(propensity));
    accumulate(name, target, data.n_rows(), trajectories, groups, normalization, |traj| {
        if !data.mask(traj.row).is_superset_of(adjustment) {
            return Ok(TrajTerms {
                entries: Vec::new(),
                weight: Some(WeightInfo {
                    last: 0.0,
                    min_propensity: 1.0,
                    floored: false,
                }),
            });
        }
        let row = data.row(traj.row);
        let p_adj = propensity.prob_superset(adjustment, &row)?;
        let initial = 1.0 / p_adj.max(PROPENSITY_FLOOR);
        let mut ws = weight_series(traj, &row, propensity, initial, adjustment)?;
        ws.min_propensity = ws.min_propensity.min(p_adj);
        ws.floored |= p_adj < PROPENSITY_FLOOR;
        Ok(TrajTerms {
            entries: ipw_entries(traj, &ws, target, groups, None),
            weight: Some(info(&ws)),
        })
    })
}
