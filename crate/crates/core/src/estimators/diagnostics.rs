use std::collections::BTreeMap;

use super::{weight_series, PROPENSITY_FLOOR};
use crate::domain::{diag, ObservedDataset, SuperMask, Trajectory};
use crate::error::Result;
use crate::nuisance::PropensityModel;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Overlap diagnostics for semi-offline weighting: quantiles of
/// `P(R >= acquired_T | x)` over trajectories, the number of floored
/// evaluations, the forced-stop fraction and the effective sample size
/// `(sum w)^2 / sum w^2` of the final weights.
pub fn positivity_diagnostics(
    data: &ObservedDataset,
    trajectories: &[Trajectory],
    propensity: &PropensityModel,
) -> Result<BTreeMap<String, f64>> {
    let mut props = Vec::with_capacity(trajectories.len());
    let (mut sw, mut sw2) = (0.0, 0.0);
    let mut floored = 0usize;
    let mut forced = 0usize;
    for t in trajectories {
        let row = data.row(t.row);
        let p = propensity.prob_superset(t.acquired(), &row)?;
        props.push(p);
        if p < PROPENSITY_FLOOR {
            floored += 1;
        }
        forced += t.forced_stop as usize;
        let w = weight_series(t, &row, propensity, 1.0, SuperMask::EMPTY)?.last();
        sw += w;
        sw2 += w * w;
    }
    let mut out = BTreeMap::new();
    let n = trajectories.len();
    out.insert(diag::FLOORED.to_string(), floored as f64);
    if n == 0 {
        return Ok(out);
    }
    props.sort_by(f64::total_cmp);
    out.insert(diag::MIN_PROPENSITY.to_string(), props[0]);
    out.insert("propensity_q05".to_string(), quantile(&props, 0.05));
    out.insert("propensity_q50".to_string(), quantile(&props, 0.5));
    out.insert(diag::FORCED_STOP_FRAC.to_string(), forced as f64 / n as f64);
    let ess = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    out.insert(diag::ESS.to_string(), ess);
    out.insert("ess_fraction".to_string(), ess / n as f64);
    out.insert(diag::MEAN_WEIGHT.to_string(), sw / n as f64);
    Ok(out)
}
