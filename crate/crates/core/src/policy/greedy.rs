use serde::{Deserialize, Serialize};

use super::encode::{encode_state, state_width};
use super::ActionDistribution;
use crate::domain::{AcquisitionState, Action, CostSpec, ObservedDataset, SuperfeatureSchema, Trajectory};
use crate::error::{AfapeError, Result};
use crate::learn::{Regressor, RegressorConfig};
use crate::rng::{self, tag};

/// Acts greedily on a fitted action-value function: picks the allowed action
/// with the lowest predicted total cost. Actions never seen in training are
/// never chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPolicy {
    /// One model per action index (STOP last).
    pub heads: Vec<Option<Regressor>>,
}

impl GreedyPolicy {
    pub fn action_values(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> Vec<Option<f64>> {
        let mut x = Vec::with_capacity(state_width(schema));
        encode_state(schema, state, &mut x);
        let n = schema.n_super();
        let open = schema.costly().difference(state.acquired());
        (0..=n)
            .map(|i| {
                let allowed = i == n || open.contains(i);
                match (&self.heads[i], allowed) {
                    (Some(h), true) => Some(h.predict(&x)),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        let n = schema.n_super();
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.action_values(schema, state).into_iter().enumerate() {
            if let Some(v) = v {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
        }
        let action = best.map_or(Action::Stop, |(i, _)| Action::from_index(i, n));
        ActionDistribution::deterministic(n, action)
    }

    pub fn restore(self) -> Self {
        GreedyPolicy {
            heads: self.heads.into_iter().map(|h| h.map(Regressor::restore)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    pub regressor: RegressorConfig,
    /// Fitted-Q sweeps; defaults to the episode length cap.
    pub iterations: Option<usize>,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            regressor: RegressorConfig::Ridge {
                lambda: 1e-3,
                quadratic: true,
            },
            iterations: None,
        }
    }
}

struct Transition {
    x: Vec<f64>,
    action: usize,
    cost: f64,
    next: Option<(Vec<f64>, Vec<usize>)>,
}

/// Fitted-Q iteration for total cost on simulated transitions replayed
/// against `data`.
pub fn fit_greedy_policy(
    sim_data: &[Trajectory],
    data: &ObservedDataset,
    costs: &CostSpec,
    cfg: &GreedyConfig,
    seed: u64,
) -> Result<GreedyPolicy> {
    if sim_data.is_empty() {
        return Err(AfapeError::Empty("greedy policy training trajectories"));
    }
    let schema = data.schema();
    let n = schema.n_super();
    let mut transitions = Vec::new();
    for traj in sim_data {
        let source = data.row(traj.row);
        let states = traj.states(schema, &source);
        for (t, step) in traj.steps.iter().enumerate() {
            let mut x = Vec::new();
            encode_state(schema, &states[t], &mut x);
            let (cost, next) = match step.action {
                Action::Stop => (traj.mc_cost, None),
                Action::Acquire(j) => {
                    let s = &states[t + 1];
                    let mut nx = Vec::new();
                    encode_state(schema, s, &mut nx);
                    let mut allowed: Vec<usize> = schema.costly().difference(s.acquired()).iter().collect();
                    allowed.push(n);
                    (costs.c_acq[j], Some((nx, allowed)))
                }
            };
            transitions.push(Transition {
                x,
                action: step.action.index(n),
                cost,
                next,
            });
        }
    }
    let p = state_width(schema);
    let mut heads: Vec<Option<Regressor>> = vec![None; n + 1];
    let iterations = cfg.iterations.unwrap_or(schema.costly().count() + 1);
    for it in 0..iterations {
        let targets: Vec<f64> = transitions
            .iter()
            .map(|tr| {
                let future = tr.next.as_ref().map_or(0.0, |(nx, allowed)| {
                    allowed
                        .iter()
                        .filter_map(|&a| heads[a].as_ref().map(|h| h.predict(nx)))
                        .fold(f64::INFINITY, f64::min)
                });
                tr.cost + if future.is_finite() { future } else { 0.0 }
            })
            .collect();
        let mut next_heads = vec![None; n + 1];
        for (a, slot) in next_heads.iter_mut().enumerate() {
            let idx: Vec<usize> = (0..transitions.len()).filter(|&i| transitions[i].action == a).collect();
            if idx.is_empty() {
                continue;
            }
            let x: Vec<f64> = idx.iter().flat_map(|&i| transitions[i].x.iter().copied()).collect();
            let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let mut r = rng::stream(&[tag::GREEDY, seed, it as u64, a as u64]);
            *slot = Some(Regressor::fit(&cfg.regressor, &x, p, &y, None, &mut r, heads[a].as_ref())?);
        }
        heads = next_heads;
    }
    Ok(GreedyPolicy { heads })
}
