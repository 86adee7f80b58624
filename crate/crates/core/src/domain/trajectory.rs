use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::mask::SuperMask;
use super::schema::{CostTarget, SuperfeatureSchema};
use super::state::{AcquisitionState, Action};
use crate::error::{AfapeError, Result};

/// One decision of a simulated episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    /// Probability of `action` under the (unblocked) target policy.
    pub p_alpha: f64,
    /// Probability of `action` under the blocked simulation policy that
    /// actually sampled it.
    pub p_sim: f64,
    pub acquisition_cost: f64,
}

/// One simulated acquisition episode on a single data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub row: usize,
    pub episode: u32,
    pub steps: Vec<Step>,
    pub prediction: u32,
    pub mc_cost: f64,
    /// Every action with positive target probability was blocked, so the
    /// episode was ended with a STOP the target policy would not take.
    pub forced_stop: bool,
}

impl Trajectory {
    /// Number of decisions `T` including the final STOP.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn acquisition_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.acquisition_cost).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.acquisition_cost() + self.mc_cost
    }

    pub fn cost(&self, target: CostTarget) -> f64 {
        match target {
            CostTarget::Misclassification => self.mc_cost,
            CostTarget::Acquisition => self.acquisition_cost(),
            CostTarget::Total => self.total_cost(),
        }
    }

    /// Cost incurred at decision `t` (1-based) for `target`.
    pub fn step_cost(&self, t: usize, target: CostTarget) -> f64 {
        let step = &self.steps[t - 1];
        match step.action {
            Action::Acquire(_) if target.counts_acquisition() => step.acquisition_cost,
            Action::Stop if target.counts_misclassification() => self.mc_cost,
            _ => 0.0,
        }
    }

    /// Superfeatures acquired by this episode (free set excluded).
    pub fn acquired(&self) -> SuperMask {
        SuperMask::from_indices(self.steps.iter().filter_map(|s| match s.action {
            Action::Acquire(j) => Some(j),
            Action::Stop => None,
        }))
    }

    /// States before each decision, replayed against the row's values.
    /// Entry `t - 1` is the state in which decision `t` was taken.
    pub fn states(&self, schema: &SuperfeatureSchema, source: &[Option<f64>]) -> Vec<AcquisitionState> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut state = AcquisitionState::initial(schema, source);
        for s in &self.steps {
            out.push(state.clone());
            if let Action::Acquire(j) = s.action {
                state.reveal(schema, j, source);
            }
        }
        out
    }

    /// Checks the structural invariants: positive sampling probabilities,
    /// single terminal STOP, no repeated acquisitions, and acquisitions
    /// within `available`.
    pub fn check(&self, available: SuperMask, c_mc: f64) -> Result<()> {
        let bad = |msg: &str| Err(AfapeError::Data(format!("trajectory row {} episode {}: {msg}", self.row, self.episode)));
        if self.steps.last().map(|s| s.action) != Some(Action::Stop) {
            return bad("does not end with STOP");
        }
        let mut seen = SuperMask::EMPTY;
        for (i, s) in self.steps.iter().enumerate() {
            if s.p_sim.is_nan() || s.p_sim <= 0.0 {
                return bad("step with zero sampling probability");
            }
            match s.action {
                Action::Acquire(j) => {
                    if seen.contains(j) {
                        return bad("superfeature acquired twice");
                    }
                    if !available.contains(j) {
                        return bad("acquired an unavailable superfeature");
                    }
                    seen.insert(j);
                }
                Action::Stop if i + 1 != self.steps.len() => return bad("STOP before the last step"),
                Action::Stop => {}
            }
        }
        if self.mc_cost != 0.0 && self.mc_cost != c_mc {
            return bad("misclassification cost is neither 0 nor c_mc");
        }
        Ok(())
    }
}

const HEADER: [&str; 10] = [
    "row", "episode", "step", "action", "p_alpha", "p_sim", "cost", "forced", "prediction", "mc_cost",
];

/// Writes trajectories as CSV, one line per decision followed by a
/// `TERMINAL` line carrying the prediction and misclassification cost.
pub fn write_trajectories_csv<W: Write>(trajectories: &[Trajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for tr in trajectories {
        let forced = if tr.forced_stop { "1" } else { "0" };
        for (t, s) in tr.steps.iter().enumerate() {
            w.write_record([
                tr.row.to_string(),
                tr.episode.to_string(),
                (t + 1).to_string(),
                s.action.to_string(),
                s.p_alpha.to_string(),
                s.p_sim.to_string(),
                s.acquisition_cost.to_string(),
                forced.to_string(),
                String::new(),
                String::new(),
            ])?;
        }
        w.write_record([
            tr.row.to_string(),
            tr.episode.to_string(),
            tr.steps.len().to_string(),
            "TERMINAL".to_string(),
            String::new(),
            String::new(),
            tr.mc_cost.to_string(),
            forced.to_string(),
            tr.prediction.to_string(),
            tr.mc_cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut current: Option<Trajectory> = None;
    let parse_err = |line: usize, what: &str, v: &str| AfapeError::Parse {
        row: line,
        column: what.to_string(),
        value: v.to_string(),
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> { field(i).parse::<f64>().map_err(|_| parse_err(line, HEADER[i], field(i))) };
        let int = |i: usize| -> Result<usize> { field(i).parse::<usize>().map_err(|_| parse_err(line, HEADER[i], field(i))) };
        let row = int(0)?;
        let episode = int(1)? as u32;
        let tr = current.get_or_insert_with(|| Trajectory {
            row,
            episode,
            steps: Vec::new(),
            prediction: 0,
            mc_cost: 0.0,
            forced_stop: false,
        });
        if tr.row != row || tr.episode != episode {
            return Err(AfapeError::Data(format!("line {line}: trajectory missing its TERMINAL line")));
        }
        tr.forced_stop = field(7) == "1";
        match field(3) {
            "TERMINAL" => {
                tr.prediction = int(8)? as u32;
                tr.mc_cost = num(9)?;
                out.push(current.take().expect("set above"));
            }
            a => {
                let action = if a == "STOP" {
                    Action::Stop
                } else {
                    Action::Acquire(a.parse().map_err(|_| parse_err(line, "action", a))?)
                };
                tr.steps.push(Step {
                    action,
                    p_alpha: num(4)?,
                    p_sim: num(5)?,
                    acquisition_cost: num(6)?,
                });
            }
        }
    }
    if current.is_some() {
        return Err(AfapeError::Data("trailing trajectory without TERMINAL line".into()));
    }
    Ok(out)
}
