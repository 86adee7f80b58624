use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::schema::CostTarget;
use crate::error::Result;

/// Diagnostic keys shared by estimators and the CSV writer.
pub mod diag {
    pub const ESS: &str = "ess";
    pub const MEAN_WEIGHT: &str = "mean_weight";
    pub const FLOORED: &str = "floored";
    pub const FORCED_STOP_FRAC: &str = "forced_stop_frac";
    pub const MIN_PROPENSITY: &str = "min_propensity";
}

/// Output of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub target: CostTarget,
    pub point: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_rows: usize,
    pub n_trajectories: usize,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(estimator: impl Into<String>, target: CostTarget, point: f64, n_rows: usize, n_trajectories: usize) -> Self {
        EstimateReport {
            estimator: estimator.into(),
            target,
            point,
            ci_low: None,
            ci_high: None,
            n_rows,
            n_trajectories,
            diagnostics: BTreeMap::new(),
        }
    }

    /// Attaches an interval. The interval is widened to contain the point
    /// estimate if a percentile interval happens to exclude it.
    pub fn with_ci(mut self, (lo, hi): (f64, f64)) -> Self {
        self.ci_low = Some(lo.min(self.point));
        self.ci_high = Some(hi.max(self.point));
        self
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    pub fn ci(&self) -> Option<(f64, f64)> {
        Some((self.ci_low?, self.ci_high?))
    }

    pub fn ci_contains(&self, value: f64) -> Option<bool> {
        self.ci().map(|(lo, hi)| lo <= value && value <= hi)
    }
}

pub const REPORT_CSV_HEADER: [&str; 11] = [
    "estimator",
    "target",
    "point",
    "ci_low",
    "ci_high",
    "n_rows",
    "n_traj",
    "ess",
    "mean_weight",
    "floored",
    "forced_stop_frac",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV line per report. Absent values are left empty.
pub fn write_reports_csv<W: Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.estimator.clone(),
            r.target.to_string(),
            r.point.to_string(),
            opt(r.ci_low),
            opt(r.ci_high),
            r.n_rows.to_string(),
            r.n_trajectories.to_string(),
            opt(r.diagnostic(diag::ESS)),
            opt(r.diagnostic(diag::MEAN_WEIGHT)),
            opt(r.diagnostic(diag::FLOORED)),
            opt(r.diagnostic(diag::FORCED_STOP_FRAC)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
