use serde::{Deserialize, Serialize};

use super::PropensityModel;
use crate::domain::{AcquisitionState, Action, CostTarget, ObservedDataset, SuperMask, SuperfeatureSchema, Trajectory};
use crate::error::{AfapeError, Result};
use crate::estimators::weight_series;
use crate::learn::{Regressor, RegressorConfig};
use crate::policy::{encode_state, state_width, Policy};
use crate::rng::{self, tag};

/// Semi-offline action-value function `Q(state, action)`: the expected
/// remaining cost after taking `action` and following the target policy.
///
/// The conditioning features are the free superfeatures, which are part of
/// every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    pub target: CostTarget,
    pub heads: QHeads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QHeads {
    Constant { value: f64 },
    /// One model over the state encoding followed by a one-hot action.
    Joint { model: Regressor },
    /// One model per action index (STOP last); `fallback` covers actions
    /// without training data.
    PerAction { models: Vec<Option<Regressor>>, fallback: f64 },
}

fn joint_features(schema: &SuperfeatureSchema, state: &AcquisitionState, action: Action, out: &mut Vec<f64>) {
    encode_state(schema, state, out);
    let n = schema.n_super();
    let a = action.index(n);
    out.extend((0..=n).map(|i| if i == a { 1.0 } else { 0.0 }));
}

impl QModel {
    pub fn constant(target: CostTarget, value: f64) -> Self {
        QModel {
            target,
            heads: QHeads::Constant { value },
        }
    }

    pub fn q(&self, schema: &SuperfeatureSchema, state: &AcquisitionState, action: Action) -> f64 {
        match &self.heads {
            QHeads::Constant { value } => *value,
            QHeads::Joint { model } => {
                let mut x = Vec::with_capacity(state_width(schema) + schema.n_super() + 1);
                joint_features(schema, state, action, &mut x);
                model.predict(&x)
            }
            QHeads::PerAction { models, fallback } => match &models[action.index(schema.n_super())] {
                Some(m) => {
                    let mut x = Vec::with_capacity(state_width(schema));
                    encode_state(schema, state, &mut x);
                    m.predict(&x)
                }
                None => *fallback,
            },
        }
    }

    /// `V(state) = sum_a pi(a | state) Q(state, a)`.
    pub fn v(&self, schema: &SuperfeatureSchema, policy: &dyn Policy, state: &AcquisitionState) -> f64 {
        policy
            .distribution(schema, state)
            .support()
            .map(|(a, p)| p * self.q(schema, state, a))
            .sum()
    }

    pub fn restore(self) -> Self {
        let heads = match self.heads {
            QHeads::Joint { model } => QHeads::Joint { model: model.restore() },
            QHeads::PerAction { models, fallback } => QHeads::PerAction {
                models: models.into_iter().map(|m| m.map(Regressor::restore)).collect(),
                fallback,
            },
            c => c,
        };
        QModel { target: self.target, heads }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QFitConfig {
    pub regressor: RegressorConfig,
    /// Weight transitions by the cumulative importance weight of their step.
    pub rho_weighted: bool,
    /// Backward sweeps; defaults to the episode length cap.
    pub iterations: Option<usize>,
}

impl Default for QFitConfig {
    fn default() -> Self {
        QFitConfig {
            regressor: RegressorConfig::Ridge {
                lambda: 1e-3,
                quadratic: true,
            },
            rho_weighted: false,
            iterations: None,
        }
    }
}

/// Inputs to [`fit_q_semi`].
pub struct QProblem<'a> {
    pub trajectories: &'a [Trajectory],
    pub data: &'a ObservedDataset,
    pub policy: &'a dyn Policy,
    pub target: CostTarget,
    /// Per-trajectory sample weights.
    pub weights: Option<&'a [f64]>,
    /// Needed when the configuration asks for importance-weighted fitting.
    pub propensity: Option<&'a PropensityModel>,
}

struct Transition {
    x: Vec<f64>,
    action: usize,
    reward: f64,
    /// `(pi(a'|s'), action index, features of (s', a'))` over the target
    /// policy's support.
    next: Vec<(f64, usize, Vec<f64>)>,
    weight: f64,
}

fn features(schema: &SuperfeatureSchema, joint: bool, state: &AcquisitionState, action: Action) -> Vec<f64> {
    let mut x = Vec::new();
    if joint {
        joint_features(schema, state, action, &mut x);
    } else {
        encode_state(schema, state, &mut x);
    }
    x
}

/// Backward fitted-Q evaluation on semi-offline transitions.
///
/// Each sweep regresses `cost_t + V(s_{t+1})` (with `V` taken from the
/// previous sweep, zero after STOP) on the state-action encoding.
pub fn fit_q_semi(problem: &QProblem<'_>, cfg: &QFitConfig, seed: u64) -> Result<QModel> {
    if problem.trajectories.is_empty() {
        return Err(AfapeError::Empty("trajectories for Q fitting"));
    }
    let data = problem.data;
    let schema = data.schema();
    let n = schema.n_super();
    let joint = !matches!(cfg.regressor, RegressorConfig::Ridge { .. });
    if cfg.rho_weighted && problem.propensity.is_none() {
        return Err(AfapeError::invalid("importance-weighted Q fitting needs a propensity model"));
    }

    let mut transitions = Vec::new();
    for (i, traj) in problem.trajectories.iter().enumerate() {
        let source = data.row(traj.row);
        let states = traj.states(schema, &source);
        let base_w = problem.weights.map_or(1.0, |w| w[i]);
        let rho = match (cfg.rho_weighted, problem.propensity) {
            (true, Some(p)) => Some(weight_series(traj, &source, p, 1.0, SuperMask::EMPTY)?),
            _ => None,
        };
        for (t, step) in traj.steps.iter().enumerate() {
            let next = match step.action {
                Action::Stop => Vec::new(),
                Action::Acquire(_) => {
                    let s = &states[t + 1];
                    problem
                        .policy
                        .distribution(schema, s)
                        .support()
                        .map(|(a, p)| (p, a.index(n), features(schema, joint, s, a)))
                        .collect()
                }
            };
            transitions.push(Transition {
                x: features(schema, joint, &states[t], step.action),
                action: step.action.index(n),
                reward: traj.step_cost(t + 1, problem.target),
                next,
                weight: base_w * rho.as_ref().map_or(1.0, |r| r.rho[t + 1]),
            });
        }
    }

    let p = transitions[0].x.len();
    let sweeps = cfg.iterations.unwrap_or(schema.costly().count() + 1).max(1);
    let weights: Vec<f64> = transitions.iter().map(|t| t.weight).collect();
    let total_w: f64 = weights.iter().sum();
    let mut model = QModel::constant(problem.target, 0.0);
    for sweep in 0..sweeps {
        let predict = |model: &QModel, action: usize, x: &[f64]| -> f64 {
            match &model.heads {
                QHeads::Constant { value } => *value,
                QHeads::Joint { model } => model.predict(x),
                QHeads::PerAction { models, fallback } => {
                    models[action].as_ref().map_or(*fallback, |m| m.predict(x))
                }
            }
        };
        let targets: Vec<f64> = transitions
            .iter()
            .map(|tr| {
                let future: f64 = tr
                    .next
                    .iter()
                    .map(|(pa, a, x)| if sweep == 0 { 0.0 } else { pa * predict(&model, *a, x) })
                    .sum();
                tr.reward + future
            })
            .collect();
        let mut r = rng::stream(&[tag::QFIT, seed, sweep as u64]);
        model.heads = if joint {
            let x: Vec<f64> = transitions.iter().flat_map(|t| t.x.iter().copied()).collect();
            let warm = match &model.heads {
                QHeads::Joint { model } => Some(model),
                _ => None,
            };
            QHeads::Joint {
                model: Regressor::fit(&cfg.regressor, &x, p, &targets, Some(&weights), &mut r, warm)?,
            }
        } else {
            let fallback = transitions.iter().zip(&targets).map(|(t, y)| t.weight * y).sum::<f64>() / total_w;
            let mut models = Vec::with_capacity(n + 1);
            for a in 0..=n {
                let idx: Vec<usize> = (0..transitions.len()).filter(|&i| transitions[i].action == a).collect();
                if idx.is_empty() {
                    models.push(None);
                    continue;
                }
                let x: Vec<f64> = idx.iter().flat_map(|&i| transitions[i].x.iter().copied()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
                let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
                models.push(Some(Regressor::fit(&cfg.regressor, &x, p, &y, Some(&w), &mut r, None)?));
            }
            QHeads::PerAction { models, fallback }
        };
    }
    Ok(model)
}
