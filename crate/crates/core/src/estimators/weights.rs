use crate::domain::{Action, SuperMask, Trajectory};
use crate::error::Result;
use crate::nuisance::PropensityModel;

/// Lower bound applied to propensity products at evaluation time.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    #[default]
    SelfNormalized,
}

/// Cumulative importance weights of one trajectory.
///
/// `rho[t]` for `t = 0..=T` is the weight after `t` decisions:
/// `rho[t] = rho[0] * prod_{s<=t} p_alpha/p_sim / P(R >= acquired_t | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeries {
    pub rho: Vec<f64>,
    /// Smallest propensity product used along the trajectory.
    pub min_propensity: f64,
    /// Whether any evaluation hit [`PROPENSITY_FLOOR`].
    pub floored: bool,
}

impl WeightSeries {
    pub fn last(&self) -> f64 {
        *self.rho.last().expect("rho[0] always exists")
    }

    /// `rho[min(t, T)]`.
    pub fn at(&self, t: usize) -> f64 {
        self.rho[t.min(self.rho.len() - 1)]
    }
}

/// Weight series for a semi-offline trajectory.
///
/// `initial` is `rho[0]` (1 for the pure semi-offline estimator, the
/// missing-data weight for the hybrid one). Acquisitions of superfeatures
/// in `skip` do not enter the propensity product (they are already
/// accounted for by `initial`).
pub fn weight_series(
    traj: &Trajectory,
    row: &[Option<f64>],
    propensity: &PropensityModel,
    initial: f64,
    skip: SuperMask,
) -> Result<WeightSeries> {
    let mut rho = Vec::with_capacity(traj.len() + 1);
    rho.push(initial);
    let mut ratio = 1.0;
    let mut prop = 1.0;
    let mut min_propensity = 1.0f64;
    let mut floored = false;
    for step in &traj.steps {
        ratio *= step.p_alpha / step.p_sim;
        if let Action::Acquire(j) = step.action {
            if !skip.contains(j) {
                prop *= propensity.factor(j, row)?;
            }
        }
        min_propensity = min_propensity.min(prop);
        let denom = if prop < PROPENSITY_FLOOR {
            floored = true;
            PROPENSITY_FLOOR
        } else {
            prop
        };
        rho.push(initial * ratio / denom);
    }
    Ok(WeightSeries {
        rho,
        min_propensity,
        floored,
    })
}
