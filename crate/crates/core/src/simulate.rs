//! Episode simulation: semi-offline rollouts on rows with missing values
//! (acquisitions of unavailable superfeatures are blocked) and unblocked
//! rollouts on fully observed data.

use rand::Rng;

use crate::domain::{
    AcquisitionState, Action, CostSpec, FullDataset, ObservedDataset, Step, SuperMask, SuperfeatureSchema,
    Trajectory,
};
use crate::error::{AfapeError, Result};
use crate::par;
use crate::policy::{block_policy, Classifier, Policy};
use crate::rng::{self, tag};

/// The fixed ingredients of a rollout.
#[derive(Clone, Copy)]
pub struct Simulator<'a> {
    pub schema: &'a SuperfeatureSchema,
    /// The policy being evaluated; its unblocked probabilities are recorded
    /// as `p_alpha`.
    pub target: &'a dyn Policy,
    /// Policy that drives the simulation after blocking. Defaults to
    /// `target`.
    pub simulation: Option<&'a dyn Policy>,
    pub classifier: &'a dyn Classifier,
    pub costs: &'a CostSpec,
}

impl<'a> Simulator<'a> {
    pub fn new(
        schema: &'a SuperfeatureSchema,
        target: &'a dyn Policy,
        classifier: &'a dyn Classifier,
        costs: &'a CostSpec,
    ) -> Self {
        Simulator {
            schema,
            target,
            simulation: None,
            classifier,
            costs,
        }
    }

    pub fn with_simulation(mut self, simulation: &'a dyn Policy) -> Self {
        self.simulation = Some(simulation);
        self
    }

    /// Runs one episode on a row whose available superfeatures are
    /// `available` and whose values are `source`.
    pub fn episode<R: Rng>(
        &self,
        row: usize,
        episode: u32,
        source: &[Option<f64>],
        available: SuperMask,
        label: u32,
        rng: &mut R,
    ) -> Trajectory {
        let schema = self.schema;
        let mut state = AcquisitionState::initial(schema, source);
        let mut steps = Vec::new();
        let forced_stop = loop {
            let base = self.target.distribution(schema, &state);
            let sim_base = match self.simulation {
                Some(p) => p.distribution(schema, &state),
                None => base.clone(),
            };
            let sim = block_policy(&sim_base, available);
            let action = sim.sample(rng);
            let step = Step {
                action,
                p_alpha: base.prob(action),
                p_sim: sim.prob(action),
                acquisition_cost: match action {
                    Action::Acquire(j) => self.costs.c_acq[j],
                    Action::Stop => 0.0,
                },
            };
            steps.push(step);
            match action {
                Action::Acquire(j) => state.reveal(schema, j, source),
                Action::Stop => break sim.is_forced(),
            }
        };
        let prediction = self.classifier.predict(&state);
        Trajectory {
            row,
            episode,
            steps,
            prediction,
            mc_cost: if prediction == label { 0.0 } else { self.costs.c_mc },
            forced_stop,
        }
    }

    /// Every episode the blocked simulation can produce on one row, with
    /// its probability. Episodes are numbered in depth-first order.
    pub fn enumerate_episodes(
        &self,
        row: usize,
        source: &[Option<f64>],
        available: SuperMask,
        label: u32,
    ) -> Vec<(f64, Trajectory)> {
        let mut out = Vec::new();
        let state = AcquisitionState::initial(self.schema, source);
        self.enumerate_from(row, source, available, label, state, Vec::new(), 1.0, &mut out);
        for (i, (_, t)) in out.iter_mut().enumerate() {
            t.episode = i as u32;
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_from(
        &self,
        row: usize,
        source: &[Option<f64>],
        available: SuperMask,
        label: u32,
        state: AcquisitionState,
        steps: Vec<Step>,
        prob: f64,
        out: &mut Vec<(f64, Trajectory)>,
    ) {
        let base = self.target.distribution(self.schema, &state);
        let sim_base = match self.simulation {
            Some(p) => p.distribution(self.schema, &state),
            None => base.clone(),
        };
        let sim = block_policy(&sim_base, available);
        for (action, p) in sim.support() {
            let mut steps = steps.clone();
            steps.push(Step {
                action,
                p_alpha: base.prob(action),
                p_sim: p,
                acquisition_cost: match action {
                    Action::Acquire(j) => self.costs.c_acq[j],
                    Action::Stop => 0.0,
                },
            });
            match action {
                Action::Acquire(j) => {
                    let mut next = state.clone();
                    next.reveal(self.schema, j, source);
                    self.enumerate_from(row, source, available, label, next, steps, prob * p, out);
                }
                Action::Stop => {
                    let prediction = self.classifier.predict(&state);
                    out.push((
                        prob * p,
                        Trajectory {
                            row,
                            episode: 0,
                            steps,
                            prediction,
                            mc_cost: if prediction == label { 0.0 } else { self.costs.c_mc },
                            forced_stop: sim.is_forced(),
                        },
                    ));
                }
            }
        }
    }

    fn run_rows<F>(&self, rows: &[usize], n_traj: usize, keys: (u64, u64), fetch: F) -> Result<Vec<Trajectory>>
    where
        F: Fn(usize) -> (Vec<Option<f64>>, SuperMask, u32) + Sync + Send,
    {
        if n_traj == 0 {
            return Err(AfapeError::invalid("n_traj_per_row must be at least 1"));
        }
        let per_row = par::map_indexed(rows.len(), |i| {
            let r = rows[i];
            let (source, available, label) = fetch(r);
            (0..n_traj)
                .map(|e| {
                    let mut rng = rng::stream(&[keys.0, keys.1, r as u64, e as u64]);
                    self.episode(r, e as u32, &source, available, label, &mut rng)
                })
                .collect::<Vec<_>>()
        });
        Ok(per_row.into_iter().flatten().collect())
    }

    /// Semi-offline rollouts on the given rows of `data`, ordered by
    /// (row, episode). Row `r`, episode `e` uses the stream
    /// `(stream_tag, seed, r, e)`.
    pub fn semi_offline_rows(
        &self,
        data: &ObservedDataset,
        rows: &[usize],
        n_traj: usize,
        stream_tag: u64,
        seed: u64,
    ) -> Result<Vec<Trajectory>> {
        self.run_rows(rows, n_traj, (stream_tag, seed), |r| (data.row(r), data.mask(r), data.label(r)))
    }

    pub fn semi_offline(&self, data: &ObservedDataset, n_traj: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        self.semi_offline_rows(data, &rows, n_traj, tag::ROLLOUT, seed)
    }

    pub fn ground_truth(&self, full: &FullDataset, n_traj: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let all = self.schema.all();
        let rows: Vec<usize> = (0..full.n_rows()).collect();
        self.run_rows(&rows, n_traj, (tag::GROUND_TRUTH, seed), |r| {
            (full.row(r).iter().map(|v| Some(*v)).collect(), all, full.label(r))
        })
    }
}

/// Semi-offline rollouts of `policy` over every row of `data`.
pub fn rollout_semi_offline(
    data: &ObservedDataset,
    policy: &dyn Policy,
    classifier: &dyn Classifier,
    costs: &CostSpec,
    n_traj_per_row: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    Simulator::new(data.schema(), policy, classifier, costs).semi_offline(data, n_traj_per_row, seed)
}

/// Unblocked rollouts on fully observed data.
pub fn rollout_ground_truth(
    full: &FullDataset,
    policy: &dyn Policy,
    classifier: &dyn Classifier,
    costs: &CostSpec,
    n_traj_per_row: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    Simulator::new(full.schema(), policy, classifier, costs).ground_truth(full, n_traj_per_row, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{AnyPolicy, FixedOrderPolicy, MajorityClassifier, SubsetRandomPolicy};
    use std::sync::Arc;

    fn data() -> ObservedDataset {
        let schema = Arc::new(SuperfeatureSchema::synthetic_default());
        let masks = vec![SuperMask::full(3), SuperMask::from_indices([0, 1]), SuperMask::from_indices([0])];
        ObservedDataset::from_parts(schema, (0..12).map(|v| v as f64).collect(), masks, vec![0, 1, 1]).unwrap()
    }

    #[test]
    fn blocked_rows_never_acquire_missing() {
        let d = data();
        let costs = CostSpec::from_schema(d.schema(), 14.0).unwrap();
        let pol = AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(0.9));
        let clf = MajorityClassifier { label: 1 };
        let trajs = rollout_semi_offline(&d, &pol, &clf, &costs, 50, 1).unwrap();
        assert_eq!(trajs.len(), 150);
        for t in &trajs {
            t.check(d.mask(t.row), 14.0).unwrap();
            if t.row == 0 {
                assert!(t.steps.iter().all(|s| s.p_alpha == s.p_sim));
            }
        }
        assert!(trajs.iter().filter(|t| t.row == 2).all(|t| t.len() == 1));
        assert!(trajs.iter().filter(|t| t.row == 0).all(|t| t.mc_cost == 14.0));
    }

    #[test]
    fn forced_stop_is_flagged() {
        let d = data();
        let costs = CostSpec::from_schema(d.schema(), 1.0).unwrap();
        let pol = AnyPolicy::FixedOrder(FixedOrderPolicy { order: vec![2] });
        let clf = MajorityClassifier { label: 0 };
        let trajs = rollout_semi_offline(&d, &pol, &clf, &costs, 1, 0).unwrap();
        assert!(!trajs[0].forced_stop);
        assert!(trajs[1].forced_stop);
        assert_eq!(trajs[1].steps[0].p_alpha, 0.0);
        assert_eq!(trajs[1].steps[0].p_sim, 1.0);
    }

    #[test]
    fn deterministic() {
        let d = data();
        let costs = CostSpec::from_schema(d.schema(), 14.0).unwrap();
        let pol = AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(0.5));
        let clf = MajorityClassifier { label: 1 };
        let a = rollout_semi_offline(&d, &pol, &clf, &costs, 5, 3).unwrap();
        let b = rollout_semi_offline(&d, &pol, &clf, &costs, 5, 3).unwrap();
        assert_eq!(a, b);
    }
}
