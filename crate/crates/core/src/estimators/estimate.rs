use std::collections::BTreeMap;

use super::bootstrap::{bootstrap_ci, BootstrapConfig};
use super::TermTable;
use crate::domain::{diag, CostTarget, EstimateReport, Trajectory};
use crate::error::{AfapeError, Result};
use crate::par;

/// A point estimate together with the per-row terms it was built from.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub estimator: String,
    pub target: CostTarget,
    pub terms: TermTable,
    pub n_trajectories: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Estimate {
    pub fn point(&self) -> f64 {
        self.terms.estimate()
    }

    pub fn n_rows(&self) -> usize {
        self.terms.n_units()
    }

    /// Delta-method standard error over rows.
    pub fn standard_error(&self) -> f64 {
        self.terms.standard_error()
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.estimator = name.into();
        self
    }

    /// Percentile bootstrap interval over rows, re-using the stored terms.
    pub fn ci(&self, cfg: &BootstrapConfig) -> Result<(f64, f64)> {
        bootstrap_ci(self.n_rows(), cfg, |w| self.terms.estimate_weighted(w))
    }

    pub fn report(&self) -> EstimateReport {
        let mut r = EstimateReport::new(
            self.estimator.clone(),
            self.target,
            self.point(),
            self.n_rows(),
            self.n_trajectories,
        );
        for (k, v) in &self.diagnostics {
            r = r.with_diagnostic(k, *v);
        }
        r
    }

    pub fn report_with_ci(&self, cfg: &BootstrapConfig) -> Result<EstimateReport> {
        Ok(self.report().with_ci(self.ci(cfg)?))
    }
}

/// Terms of one trajectory: `(group, a, b)` entries plus weight information
/// for the diagnostics.
pub(crate) struct TrajTerms {
    pub entries: Vec<(usize, f64, f64)>,
    pub weight: Option<WeightInfo>,
}

pub(crate) struct WeightInfo {
    pub last: f64,
    pub min_propensity: f64,
    pub floored: bool,
}

/// Builds a term table with one unit per data row. Each row's terms are
/// averaged over its trajectories; rows without trajectories contribute
/// zeros.
pub(crate) fn accumulate<F>(
    name: String,
    target: CostTarget,
    n_rows: usize,
    trajectories: &[Trajectory],
    groups: usize,
    normalization: super::Normalization,
    per_trajectory: F,
) -> Result<Estimate>
where
    F: Fn(&Trajectory) -> Result<TrajTerms> + Sync + Send,
{
    let computed = par::map_indexed(trajectories.len(), |i| per_trajectory(&trajectories[i]));
    let mut table = TermTable::zeros(n_rows, groups, normalization);
    let mut counts = vec![0usize; n_rows];
    let (mut sw, mut sw2, mut n_weighted) = (0.0, 0.0, 0usize);
    let mut floored = 0usize;
    let mut min_prop = f64::INFINITY;
    for (traj, terms) in trajectories.iter().zip(computed) {
        let terms = terms?;
        if traj.row >= n_rows {
            return Err(AfapeError::Data(format!("trajectory refers to row {} of {n_rows}", traj.row)));
        }
        counts[traj.row] += 1;
        for (g, a, b) in terms.entries {
            table.add(traj.row, g, a, b);
        }
        if let Some(w) = terms.weight {
            sw += w.last;
            sw2 += w.last * w.last;
            n_weighted += 1;
            floored += w.floored as usize;
            min_prop = min_prop.min(w.min_propensity);
        }
    }
    for (r, &c) in counts.iter().enumerate() {
        if c > 1 {
            table.scale_unit(r, c as f64);
        }
    }
    let mut diagnostics = BTreeMap::new();
    let n = trajectories.len();
    if n > 0 {
        let forced = trajectories.iter().filter(|t| t.forced_stop).count();
        diagnostics.insert(diag::FORCED_STOP_FRAC.to_string(), forced as f64 / n as f64);
    }
    if n_weighted > 0 {
        diagnostics.insert(diag::ESS.to_string(), if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 });
        diagnostics.insert(diag::MEAN_WEIGHT.to_string(), sw / n_weighted as f64);
        diagnostics.insert(diag::FLOORED.to_string(), floored as f64);
        diagnostics.insert(diag::MIN_PROPENSITY.to_string(), min_prop);
    }
    Ok(Estimate {
        estimator: name,
        target,
        terms: table,
        n_trajectories: n,
        diagnostics,
    })
}
