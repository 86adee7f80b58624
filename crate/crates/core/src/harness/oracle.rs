//! A tiny binary environment in which every quantity can be enumerated
//! exactly, and a suite that checks the estimators against it.
//!
//! Columns `x0` (free), `x1` and `x2` (cost 1 each) and the label are
//! binary. Missingness of `x1` and `x2` depends on `x0` only. The policy
//! is adaptive and the classifier is the Bayes-optimal lookup table.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{apply_missingness, LogisticTerm, MissingnessMechanism, MissingnessRule};
use crate::domain::{
    AcquisitionState, Action, CostSpec, CostTarget, FullDataset, ObservedDataset, SuperMask, SuperfeatureSchema,
    Trajectory,
};
use crate::error::{AfapeError, Result};
use crate::estimators::{
    estimate_blocking, estimate_cc, estimate_dm_semi, estimate_drl_semi, estimate_ground_truth, estimate_ipw_miss,
    estimate_ipw_semi, estimate_ipw_semi_miss, Estimate, Normalization, RolloutContext,
};
use crate::learn::RegressorConfig;
use crate::nuisance::{fit_q_semi, Corruption, PropensityModel, QFitConfig, QModel, QProblem};
use crate::policy::{ActionDistribution, Classifier, Policy};
use crate::rng::{self, tag};
use crate::simulate::Simulator;

pub const ORACLE_C_MC: f64 = 5.0;

pub fn oracle_schema() -> SuperfeatureSchema {
    SuperfeatureSchema::singletons(vec!["x0".into(), "x1".into(), "x2".into()], &[0.0, 1.0, 1.0])
        .expect("static schema is valid")
}

pub fn oracle_costs() -> CostSpec {
    CostSpec::from_schema(&oracle_schema(), ORACLE_C_MC).expect("static costs are valid")
}

/// `P(R_1 = 1) = sigmoid(1 - 1.5 x0)`, `P(R_2 = 1) = sigmoid(1 - 2 x0)`.
pub fn oracle_mechanism() -> MissingnessMechanism {
    MissingnessMechanism {
        rules: vec![
            MissingnessRule::Always,
            MissingnessRule::Logistic {
                intercept: 1.0,
                terms: vec![LogisticTerm { column: 0, coef: -1.5 }],
            },
            MissingnessRule::Logistic {
                intercept: 1.0,
                terms: vec![LogisticTerm { column: 0, coef: -2.0 }],
            },
        ],
    }
}

fn bern(p: f64, v: u8) -> f64 {
    if v == 1 {
        p
    } else {
        1.0 - p
    }
}

/// `P(Y = 1 | x)`.
pub fn oracle_label_prob(x: [u8; 3]) -> f64 {
    0.1 + 0.15 * x[0] as f64 + 0.3 * x[1] as f64 + 0.35 * x[2] as f64
}

/// `P(X = x)`.
pub fn oracle_feature_prob(x: [u8; 3]) -> f64 {
    let p0 = 0.4;
    let p1 = 0.3 + 0.4 * x[0] as f64;
    let p2 = 0.25 + 0.25 * x[0] as f64 + 0.3 * x[1] as f64;
    bern(p0, x[0]) * bern(p1, x[1]) * bern(p2, x[2])
}

/// All eight feature vectors.
pub fn oracle_points() -> impl Iterator<Item = [u8; 3]> {
    (0..8u8).map(|i| [i & 1, (i >> 1) & 1, (i >> 2) & 1])
}

fn as_values(x: [u8; 3]) -> Vec<Option<f64>> {
    x.iter().map(|v| Some(*v as f64)).collect()
}

fn observed(state_values: &[Option<f64>]) -> [Option<u8>; 3] {
    let mut o = [None; 3];
    for (c, v) in state_values.iter().enumerate().take(3) {
        o[c] = v.map(|x| x as u8);
    }
    o
}

fn consistent(x: [u8; 3], obs: [Option<u8>; 3]) -> bool {
    (0..3).all(|c| obs[c].is_none_or(|v| v == x[c]))
}

/// `P(Y = 1 | observed values)`.
fn label_prob_given(obs: [Option<u8>; 3]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for x in oracle_points().filter(|x| consistent(*x, obs)) {
        let p = oracle_feature_prob(x);
        num += p * oracle_label_prob(x);
        den += p;
    }
    num / den
}

/// Adaptive policy: the first acquisition depends on `x0`, the second on
/// the value revealed by the first.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn distribution(&self, schema: &SuperfeatureSchema, state: &AcquisitionState) -> ActionDistribution {
        let o = observed(state.values());
        let (p1, p2) = match (o[1], o[2]) {
            (None, None) => (if o[0] == Some(1) { 0.5 } else { 0.3 }, 0.2),
            (Some(x1), None) => (0.0, if x1 == 1 { 0.7 } else { 0.25 }),
            (None, Some(x2)) => (if x2 == 1 { 0.6 } else { 0.3 }, 0.0),
            (Some(_), Some(_)) => (0.0, 0.0),
        };
        let mut probs = vec![0.0; schema.n_super() + 1];
        probs[1] = p1;
        probs[2] = p2;
        probs[3] = 1.0 - p1 - p2;
        ActionDistribution::from_probs(probs)
    }
}

/// Bayes-optimal prediction for every pattern of observed values.
#[derive(Debug, Clone)]
pub struct LookupClassifier {
    table: HashMap<[i8; 3], u32>,
}

impl LookupClassifier {
    pub fn bayes() -> Self {
        let mut table = HashMap::new();
        for x in oracle_points() {
            for seen in 0..4u8 {
                let obs = [Some(x[0]), (seen & 1 == 1).then_some(x[1]), (seen & 2 == 2).then_some(x[2])];
                let key = obs.map(|v| v.map_or(-1, |b| b as i8));
                table.insert(key, (label_prob_given(obs) > 0.5) as u32);
            }
        }
        LookupClassifier { table }
    }
}

impl Classifier for LookupClassifier {
    fn predict(&self, state: &AcquisitionState) -> u32 {
        let key = observed(state.values()).map(|v| v.map_or(-1, |b| b as i8));
        self.table.get(&key).copied().unwrap_or(0)
    }
}

/// Exact `Q(state, action)` by backward recursion over the joint
/// distribution.
pub fn exact_q(
    costs: &CostSpec,
    classifier: &dyn Classifier,
    target: CostTarget,
    schema: &SuperfeatureSchema,
    state: &AcquisitionState,
    action: Action,
) -> f64 {
    let obs = observed(state.values());
    match action {
        Action::Stop => {
            if !target.counts_misclassification() {
                return 0.0;
            }
            let p1 = label_prob_given(obs);
            let wrong = if classifier.predict(state) == 1 { 1.0 - p1 } else { p1 };
            costs.c_mc * wrong
        }
        Action::Acquire(j) => {
            let step = if target.counts_acquisition() { costs.c_acq[j] } else { 0.0 };
            let mut den = 0.0;
            let mut by_value = [0.0; 2];
            for x in oracle_points().filter(|x| consistent(*x, obs)) {
                let p = oracle_feature_prob(x);
                by_value[x[j] as usize] += p;
                den += p;
            }
            let mut future = 0.0;
            for v in 0..2u8 {
                if by_value[v as usize] == 0.0 {
                    continue;
                }
                let mut source = state.values().to_vec();
                source[j] = Some(v as f64);
                let mut next = state.clone();
                next.reveal(schema, j, &source);
                future += by_value[v as usize] / den * exact_v(costs, classifier, target, schema, &next);
            }
            step + future
        }
    }
}

fn exact_v(
    costs: &CostSpec,
    classifier: &dyn Classifier,
    target: CostTarget,
    schema: &SuperfeatureSchema,
    state: &AcquisitionState,
) -> f64 {
    OraclePolicy
        .distribution(schema, state)
        .support()
        .map(|(a, p)| p * exact_q(costs, classifier, target, schema, state, a))
        .sum()
}

/// Exact value of the oracle policy by enumerating features, labels and
/// episodes.
pub fn oracle_exact_j(target: CostTarget) -> f64 {
    let schema = oracle_schema();
    let costs = oracle_costs();
    let clf = LookupClassifier::bayes();
    let sim = Simulator::new(&schema, &OraclePolicy, &clf, &costs);
    let mut j = 0.0;
    for x in oracle_points() {
        for y in 0..2u32 {
            let pxy = oracle_feature_prob(x) * bern(oracle_label_prob(x), y as u8);
            for (p, t) in sim.enumerate_episodes(0, &as_values(x), schema.all(), y) {
                j += pxy * p * t.cost(target);
            }
        }
    }
    j
}

/// Draws `n` fully observed rows.
pub fn oracle_sample(n: usize, seed: u64) -> Result<FullDataset> {
    let schema = Arc::new(oracle_schema());
    let points: Vec<[u8; 3]> = oracle_points().collect();
    let mut features = Vec::with_capacity(3 * n);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let mut rng = rng::stream(&[tag::FEATURES, seed, r as u64]);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut x = points[points.len() - 1];
        for p in &points {
            acc += oracle_feature_prob(*p);
            if u < acc {
                x = *p;
                break;
            }
        }
        features.extend(x.iter().map(|v| *v as f64));
        labels.push((rng.random::<f64>() < oracle_label_prob(x)) as u32);
    }
    FullDataset::new(schema, features, labels)
}

/// Every `(x, y, R)` combination as a row, with its probability, plus every
/// semi-offline episode on those rows with its joint probability.
pub struct Enumeration {
    pub data: ObservedDataset,
    pub row_probs: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub weights: Vec<f64>,
}

pub fn oracle_enumeration(sim: &Simulator<'_>, mech: &MissingnessMechanism) -> Result<Enumeration> {
    let schema = Arc::new(oracle_schema());
    let (mut values, mut masks, mut labels, mut row_probs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for x in oracle_points() {
        let xf: Vec<f64> = x.iter().map(|v| *v as f64).collect();
        for y in 0..2u32 {
            for bits in 0..4u64 {
                let mask = SuperMask::from_bits(1 | (bits << 1));
                let p = oracle_feature_prob(x) * bern(oracle_label_prob(x), y as u8) * mech.pattern_prob(&xf, mask);
                if p == 0.0 {
                    continue;
                }
                values.extend_from_slice(&xf);
                masks.push(mask);
                labels.push(y);
                row_probs.push(p);
            }
        }
    }
    let data = ObservedDataset::from_parts(schema, values, masks, labels)?;
    let (mut trajectories, mut weights) = (Vec::new(), Vec::new());
    for (r, pr) in row_probs.iter().enumerate() {
        for (p, t) in sim.enumerate_episodes(r, &data.row(r), data.mask(r), data.label(r)) {
            trajectories.push(t);
            weights.push(pr * p);
        }
    }
    Ok(Enumeration {
        data,
        row_probs,
        trajectories,
        weights,
    })
}

/// Settings of the oracle suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub target: CostTarget,
    /// Replace the ground-truth propensity by one with zeroed slopes.
    pub corrupt_propensity: bool,
    /// Replace the fitted Q-function by zero.
    pub corrupt_q: bool,
    pub rel_tol: f64,
    pub dm_tol: f64,
    pub sigmas: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_rows: 200_000,
            seed: 0,
            target: CostTarget::Total,
            corrupt_propensity: false,
            corrupt_q: false,
            rel_tol: 0.01,
            dm_tol: 1e-4,
            sigmas: 3.0,
        }
    }
}

/// One comparison against the exact value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    /// Whether the estimator is expected to land within tolerance. Biased
    /// baselines and corrupted single-nuisance estimators are expected not to.
    pub expect_within: bool,
}

impl OracleCheck {
    pub fn within(&self) -> bool {
        (self.value - self.reference).abs() <= self.tolerance
    }

    pub fn ok(&self) -> bool {
        self.within() == self.expect_within
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<32} value {:.6} reference {:.6} |diff| {:.2e} tol {:.2e}{}",
            if self.ok() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.reference,
            (self.value - self.reference).abs(),
            self.tolerance,
            if self.expect_within { "" } else { " (expected outside)" }
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub exact_j: f64,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(OracleCheck::ok)
    }

    pub fn check(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn weighted(e: &Estimate, weights: &[f64]) -> f64 {
    e.terms.estimate_weighted(weights)
}

/// Runs every estimator on the oracle environment and compares with the
/// enumerated value.
pub fn run_oracle_suite(cfg: &OracleConfig) -> Result<OracleReport> {
    if cfg.corrupt_propensity && cfg.corrupt_q {
        return Err(AfapeError::invalid("corrupt at most one nuisance at a time"));
    }
    let schema = oracle_schema();
    let costs = oracle_costs();
    let clf = LookupClassifier::bayes();
    let mech = oracle_mechanism();
    let target = cfg.target;
    let sim = Simulator::new(&schema, &OraclePolicy, &clf, &costs);
    let exact = oracle_exact_j(target);
    let rel = cfg.rel_tol * exact.abs();
    let sn = Normalization::SelfNormalized;
    let mut checks = Vec::new();
    let mut push = |name: String, value: f64, reference: f64, tolerance: f64, expect_within: bool| {
        checks.push(OracleCheck {
            name,
            value,
            reference,
            tolerance,
            expect_within,
        })
    };

    // Exact Q from the enumerated semi-offline distribution.
    let en = oracle_enumeration(&sim, &mech)?;
    let qcfg = QFitConfig {
        regressor: RegressorConfig::Tabular,
        ..QFitConfig::default()
    };
    let problem = QProblem {
        trajectories: &en.trajectories,
        data: &en.data,
        policy: &OraclePolicy,
        target,
        weights: Some(&en.weights),
        propensity: None,
    };
    let q_fit = fit_q_semi(&problem, &qcfg, cfg.seed)?;
    let mut q_err = 0.0f64;
    for t in &en.trajectories {
        let row = en.data.row(t.row);
        for (state, step) in t.states(&schema, &row).iter().zip(&t.steps) {
            let truth = exact_q(&costs, &clf, target, &schema, state, step.action);
            q_err = q_err.max((q_fit.q(&schema, state, step.action) - truth).abs());
        }
    }
    push("Q-fit max error vs DP".into(), q_err, 0.0, 1e-6, true);

    let q = if cfg.corrupt_q {
        QModel::constant(target, 0.0)
    } else {
        q_fit
    };
    let gt = PropensityModel::ground_truth(&mech);
    let prop = if cfg.corrupt_propensity {
        gt.corrupted(Corruption::ZeroSlopes)
    } else {
        gt.clone()
    };
    let tag_p = if cfg.corrupt_propensity { "corrupt" } else { "gt" };

    let dm = estimate_dm_semi(&en.data, &q, &OraclePolicy)?;
    push(
        format!("DM-Semi{} (enumerated)", if cfg.corrupt_q { "-zeroQ" } else { "" }),
        weighted(&dm, &en.row_probs),
        exact,
        cfg.dm_tol,
        !cfg.corrupt_q,
    );

    // Sampled data.
    let full = oracle_sample(cfg.n_rows, cfg.seed)?;
    let obs = apply_missingness(&full, &mech, cfg.seed)?;
    let trajs = sim.semi_offline(&obs, 1, cfg.seed)?;
    let ipw = estimate_ipw_semi(&obs, &trajs, &prop, target, sn)?;
    push(format!("IPW-Semi-{tag_p}"), ipw.point(), exact, rel, !cfg.corrupt_propensity);
    let drl = estimate_drl_semi(&obs, &trajs, &prop, &q, &OraclePolicy, sn)?;
    push(
        format!("DRL-Semi-{tag_p}{}", if cfg.corrupt_q { "-zeroQ" } else { "" }),
        drl.point(),
        exact,
        rel,
        true,
    );
    let ctx = RolloutContext {
        policy: &OraclePolicy,
        classifier: &clf,
        costs: &costs,
        n_traj: 1,
        seed: cfg.seed,
    };
    let miss = estimate_ipw_miss(&obs, &ctx, &gt, target, sn)?;
    push("IPW-Miss-gt".into(), miss.point(), exact, cfg.sigmas * miss.standard_error(), true);
    let blocking = estimate_blocking(obs.n_rows(), &trajs, target)?;
    push("Blocking".into(), blocking.point(), exact, cfg.sigmas * blocking.standard_error(), false);
    let cc = estimate_cc(&obs, &ctx, target)?;
    push("CC".into(), cc.point(), exact, cfg.sigmas * cc.standard_error(), false);

    // Exact reduction identities.
    let zero = QModel::constant(target, 0.0);
    let drl0 = estimate_drl_semi(&obs, &trajs, &prop, &zero, &OraclePolicy, sn)?;
    push("identity: DRL(Q=0) = IPW-Semi".into(), drl0.point(), ipw.point(), 1e-12, true);

    let complete = full.as_observed();
    let unit = PropensityModel::unit(&schema);
    let rows: Vec<usize> = (0..complete.n_rows()).collect();
    let blocked = sim.semi_offline_rows(&complete, &rows, 1, tag::GROUND_TRUTH, cfg.seed)?;
    let truth = sim.ground_truth(&full, 1, cfg.seed)?;
    let j_hat = estimate_ground_truth(full.n_rows(), &truth, target)?.point();
    let b_hat = estimate_blocking(complete.n_rows(), &blocked, target)?.point();
    let i_hat = estimate_ipw_semi(&complete, &blocked, &unit, target, sn)?.point();
    push("identity: no missingness, Blocking = J".into(), b_hat, j_hat, 1e-12, true);
    push("identity: no missingness, IPW-Semi = J".into(), i_hat, j_hat, 1e-12, true);

    let hybrid = estimate_ipw_semi_miss(&obs, &trajs, &gt, schema.free(), target, sn)?;
    let plain = estimate_ipw_semi(&obs, &trajs, &gt, target, sn)?;
    push("identity: trivial adjustment, hybrid = IPW-Semi".into(), hybrid.point(), plain.point(), 1e-12, true);

    Ok(OracleReport { exact_j: exact, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_distribution_sums_to_one() {
        let s: f64 = oracle_points().map(oracle_feature_prob).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn policy_distributions_are_valid() {
        let schema = oracle_schema();
        for x in oracle_points() {
            let s = AcquisitionState::initial(&schema, &as_values(x));
            let d = OraclePolicy.distribution(&schema, &s);
            assert!((d.total() - 1.0).abs() < 1e-12);
            assert_eq!(d.prob(Action::Acquire(0)), 0.0);
        }
    }
}
