use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

use super::config::{DataConfig, EstimatorKind, EstimatorSpec, ExperimentConfig, PolicySpec, PropensityChoice, Resolved};
use crate::datagen::{apply_missingness, generate_synthetic, load_csv, presets};
use crate::domain::{write_reports_csv, EstimateReport, FullDataset, ObservedDataset, SuperfeatureSchema, Trajectory};
use crate::error::{AfapeError, Result};
use crate::estimators::{
    bootstrap_ci, estimate_blocking, estimate_cc, estimate_dm_semi, estimate_drl_semi, estimate_ground_truth,
    estimate_imp_mean, estimate_ipw_miss, estimate_ipw_semi, estimate_ipw_semi_miss, positivity_diagnostics, Estimate,
    RolloutContext,
};
use crate::nuisance::{fit_propensity_mar, fit_propensity_mnar_pattern, fit_q_semi, PropensityModel, QModel, QProblem};
use crate::policy::{
    fit_classifier, fit_greedy_policy, AnyPolicy, FixedOrderPolicy, ImputeLogisticClassifier,
    SubsetRandomPolicy,
};
use crate::rng::{self, tag};
use crate::simulate::Simulator;

/// One line of the long-format convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub estimator: String,
    pub policy: String,
    pub n: usize,
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

pub const CONVERGENCE_CSV_HEADER: [&str; 6] = ["estimator", "policy", "n", "estimate", "ci_low", "ci_high"];

/// Everything computed for one policy.
#[derive(Debug, Clone)]
pub struct PolicyResult {
    pub name: String,
    pub estimates: Vec<Estimate>,
    pub reports: Vec<EstimateReport>,
    pub convergence: Vec<ConvergencePoint>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl PolicyResult {
    pub fn report(&self, estimator: &str) -> Option<&EstimateReport> {
        self.reports.iter().find(|r| r.estimator == estimator)
    }

    pub fn estimate(&self, estimator: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.estimator == estimator)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub data: BTreeMap<String, Value>,
    pub policies: Vec<PolicyResult>,
}

impl ExperimentResult {
    pub fn policy(&self, name: &str) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.name == name)
    }
}

/// Sample sizes `{1, 2, 5} x 10^k` up to `n`, plus `n` itself.
pub fn checkpoints(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut scale = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let c = m * scale;
            if c >= n {
                break 'outer;
            }
            out.push(c);
        }
        scale = match scale.checked_mul(10) {
            Some(s) => s,
            None => break,
        };
    }
    if n > 0 {
        out.push(n);
    }
    out
}

fn covariance(data: &DataConfig, d: usize) -> DMatrix<f64> {
    match data {
        DataConfig::Synthetic {
            covariance: Some(rows), ..
        } => DMatrix::from_fn(d, d, |i, j| rows[i][j]),
        DataConfig::Synthetic {
            std_devs: Some(s), ..
        } => DMatrix::from_diagonal(&DVector::from_iterator(d, s.iter().map(|v| v * v))),
        _ if d == presets::STD_DEVS.len() => presets::covariance(),
        _ => DMatrix::identity(d, d),
    }
}

/// Loads or generates the data. Returns the fully observed data when a
/// mechanism is configured, and the data with missingness.
fn load_data(cfg: &ExperimentConfig, res: &Resolved) -> Result<(Option<FullDataset>, ObservedDataset)> {
    let schema = Arc::new(res.schema.clone());
    let full = match &cfg.data {
        DataConfig::Synthetic { n_rows, .. } => {
            let cov = covariance(&cfg.data, schema.n_raw());
            Some(generate_synthetic(schema.clone(), *n_rows, &cov, cfg.seed)?)
        }
        DataConfig::Csv {
            path,
            label_column,
            sentinel,
        } => {
            let obs = load_csv(path, schema.clone(), label_column, sentinel)?;
            if res.mechanism.is_none() {
                return Ok((None, obs));
            }
            if obs.complete_fraction() < 1.0 {
                return Err(AfapeError::Config(
                    "a mechanism can only be applied to a CSV without missing values".into(),
                ));
            }
            Some(obs.impute(&vec![0.0; schema.n_raw()]))
        }
    };
    let full = full.expect("set above");
    let mech = res.mechanism.as_ref().expect("checked by resolve");
    let obs = apply_missingness(&full, mech, cfg.seed)?;
    Ok((Some(full), obs))
}

struct Splits {
    train: Vec<usize>,
    nuisance: Vec<usize>,
    test: Vec<usize>,
}

fn split_rows(cfg: &ExperimentConfig, n: usize) -> Result<Splits> {
    let [a, b, c] = cfg.splits.sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.splits.shuffle {
        order.shuffle(&mut rng::stream(&[tag::SPLIT, cfg.seed]));
    }
    Ok(Splits {
        train: order[..a].to_vec(),
        nuisance: order[a..a + b].to_vec(),
        test: order[a + b..a + b + c].to_vec(),
    })
}

fn build_policy(
    spec: &PolicySpec,
    schema: &SuperfeatureSchema,
    train: &ObservedDataset,
    classifier: &ImputeLogisticClassifier,
    res: &Resolved,
    seed: u64,
) -> Result<AnyPolicy> {
    Ok(match spec {
        PolicySpec::SubsetRandom { p_acquire } => AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(*p_acquire)),
        PolicySpec::StopAlways => AnyPolicy::StopAlways,
        PolicySpec::FixedOrder { order } => AnyPolicy::FixedOrder(FixedOrderPolicy {
            order: order
                .iter()
                .map(|n| schema.superfeature_index(n).expect("validated"))
                .collect(),
        }),
        PolicySpec::Greedy { explore, fit } => {
            let behaviour = SubsetRandomPolicy::new(*explore);
            let sim = Simulator::new(schema, &behaviour, classifier, &res.costs);
            let rows: Vec<usize> = (0..train.n_rows()).collect();
            let trajs = sim.semi_offline_rows(train, &rows, 1, tag::GREEDY, seed)?;
            AnyPolicy::Greedy(fit_greedy_policy(&trajs, train, &res.costs, fit, seed)?)
        }
    })
}

/// Propensity models, fitted lazily on the nuisance split.
struct Propensities<'a> {
    nuisance: &'a ObservedDataset,
    res: &'a Resolved,
    corruption: crate::nuisance::Corruption,
    learned_mar: Option<PropensityModel>,
    learned_pattern: Option<PropensityModel>,
}

impl Propensities<'_> {
    fn learned_mar(&mut self) -> Result<&PropensityModel> {
        if self.learned_mar.is_none() {
            self.learned_mar = Some(fit_propensity_mar(self.nuisance, self.res.conditioning)?);
        }
        Ok(self.learned_mar.as_ref().expect("just set"))
    }

    fn ground_truth(&self) -> Result<PropensityModel> {
        let mech = self
            .res
            .mechanism
            .as_ref()
            .ok_or_else(|| AfapeError::Config("ground-truth propensities need a mechanism".into()))?;
        Ok(PropensityModel::ground_truth(mech))
    }

    fn for_spec(&mut self, spec: &EstimatorSpec) -> Result<PropensityModel> {
        match (spec.kind, spec.propensity) {
            (_, PropensityChoice::GroundTruth) => self.ground_truth(),
            (EstimatorKind::IpwSemiMiss, _) => {
                if self.learned_pattern.is_none() {
                    self.learned_pattern = Some(fit_propensity_mnar_pattern(self.nuisance, self.res.adjustment)?);
                }
                Ok(self.learned_pattern.clone().expect("just set"))
            }
            (_, PropensityChoice::Learned) => Ok(self.learned_mar()?.clone()),
            (_, PropensityChoice::Corrupted) => {
                let base = match self.res.mechanism {
                    Some(_) => self.ground_truth()?,
                    None => self.learned_mar()?.clone(),
                };
                Ok(base.corrupted(self.corruption))
            }
        }
    }
}

struct PolicyRun<'a> {
    cfg: &'a ExperimentConfig,
    res: &'a Resolved,
    classifier: &'a ImputeLogisticClassifier,
    train: &'a ObservedDataset,
    nuisance: &'a ObservedDataset,
    test: &'a ObservedDataset,
    full_test: Option<&'a FullDataset>,
}

impl PolicyRun<'_> {
    fn run(&self, index: usize, props: &mut Propensities<'_>) -> Result<PolicyResult> {
        let cfg = self.cfg;
        let pc = &cfg.policies[index];
        let schema = self.test.schema().as_ref();
        let target = cfg.target;
        let seed = cfg.seed;
        let policy = build_policy(&pc.spec, schema, self.train, self.classifier, self.res, seed)?;
        let simulation = pc
            .simulation
            .as_ref()
            .map(|s| build_policy(s, schema, self.train, self.classifier, self.res, seed))
            .transpose()?;
        let mut sim = Simulator::new(schema, &policy, self.classifier, &self.res.costs);
        if let Some(s) = &simulation {
            sim = sim.with_simulation(s);
        }
        let n_traj = cfg.estimators.n_traj;
        let specs = &self.res.estimators;
        let needs_semi = specs.iter().any(|s| {
            matches!(
                s.kind,
                EstimatorKind::Blocking | EstimatorKind::IpwSemi | EstimatorKind::DrlSemi | EstimatorKind::IpwSemiMiss
            )
        });
        let trajs: Vec<Trajectory> = if needs_semi {
            sim.semi_offline(self.test, n_traj, seed)?
        } else {
            Vec::new()
        };
        let q = if specs.iter().any(|s| s.kind.needs_q()) {
            Some(self.fit_q(&sim, &policy, props)?)
        } else {
            None
        };
        let ctx = RolloutContext {
            policy: &policy,
            classifier: self.classifier,
            costs: &self.res.costs,
            n_traj,
            seed,
        };
        let norm = cfg.estimators.normalization;
        let n_test = self.test.n_rows();
        let mut estimates = Vec::with_capacity(specs.len());
        for spec in specs {
            let est = match spec.kind {
                EstimatorKind::GroundTruth => {
                    let full = self.full_test.expect("checked by resolve");
                    let gt = Simulator::new(schema, &policy, self.classifier, &self.res.costs).ground_truth(full, n_traj, seed)?;
                    estimate_ground_truth(n_test, &gt, target)?
                }
                EstimatorKind::Blocking => estimate_blocking(n_test, &trajs, target)?,
                EstimatorKind::CompleteCase => estimate_cc(self.test, &ctx, target)?,
                EstimatorKind::ImpMean => estimate_imp_mean(self.test, &self.train.observed_means(), &ctx, target)?,
                EstimatorKind::IpwMiss => estimate_ipw_miss(self.test, &ctx, &props.for_spec(spec)?, target, norm)?,
                EstimatorKind::IpwSemi => estimate_ipw_semi(self.test, &trajs, &props.for_spec(spec)?, target, norm)?,
                EstimatorKind::DmSemi => estimate_dm_semi(self.test, q.as_ref().expect("fitted above"), &policy)?,
                EstimatorKind::DrlSemi => estimate_drl_semi(
                    self.test,
                    &trajs,
                    &props.for_spec(spec)?,
                    q.as_ref().expect("fitted above"),
                    &policy,
                    norm,
                )?,
                EstimatorKind::IpwSemiMiss => estimate_ipw_semi_miss(
                    self.test,
                    &trajs,
                    &props.for_spec(spec)?,
                    self.res.adjustment,
                    target,
                    norm,
                )?,
            };
            estimates.push(est.named(spec.to_string()));
        }
        let reports = estimates
            .iter()
            .map(|e| e.report_with_ci(&cfg.bootstrap))
            .collect::<Result<Vec<_>>>()?;
        let convergence = if cfg.convergence.enabled {
            self.convergence(&pc.name, &estimates)?
        } else {
            Vec::new()
        };

        let mut diagnostics = BTreeMap::new();
        for e in &estimates {
            diagnostics.insert(e.estimator.clone(), json!(e.diagnostics));
        }
        if !trajs.is_empty() {
            let mar = self.res.mechanism.as_ref().is_none_or(|m| m.is_mar(schema));
            if mar {
                let prop = match &self.res.mechanism {
                    Some(m) => PropensityModel::ground_truth(m),
                    None => props.learned_mar()?.clone(),
                };
                if let Ok(d) = positivity_diagnostics(self.test, &trajs, &prop) {
                    diagnostics.insert("positivity".into(), json!(d));
                }
            }
            diagnostics.insert("n_trajectories".into(), json!(trajs.len()));
        }
        Ok(PolicyResult {
            name: pc.name.clone(),
            estimates,
            reports,
            convergence,
            diagnostics,
        })
    }

    fn fit_q(&self, sim: &Simulator<'_>, policy: &AnyPolicy, props: &mut Propensities<'_>) -> Result<QModel> {
        let cfg = self.cfg;
        let n = cfg.nuisances.n_traj;
        let trajs = sim.semi_offline(self.nuisance, n, rng::mix(&[cfg.seed, 1]))?;
        let prop = if cfg.nuisances.q.rho_weighted {
            Some(props.learned_mar()?.clone())
        } else {
            None
        };
        let problem = QProblem {
            trajectories: &trajs,
            data: self.nuisance,
            policy,
            target: cfg.target,
            weights: None,
            propensity: prop.as_ref(),
        };
        fit_q_semi(&problem, &cfg.nuisances.q, cfg.seed)
    }

    fn convergence(&self, policy: &str, estimates: &[Estimate]) -> Result<Vec<ConvergencePoint>> {
        let mut out = Vec::new();
        for e in estimates {
            for n in checkpoints(e.n_rows()) {
                let estimate = e.terms.estimate_prefix(n);
                let (ci_low, ci_high) = if self.cfg.convergence.ci && n >= 2 {
                    let (lo, hi) = bootstrap_ci(n, &self.cfg.bootstrap, |w| e.terms.estimate_weighted(w))?;
                    (Some(lo), Some(hi))
                } else {
                    (None, None)
                };
                out.push(ConvergencePoint {
                    estimator: e.estimator.clone(),
                    policy: policy.to_string(),
                    n,
                    estimate,
                    ci_low,
                    ci_high,
                });
            }
        }
        Ok(out)
    }
}

/// Data, splits and classifier of an experiment, before any policy is run.
pub struct Prepared {
    pub resolved: Resolved,
    pub full: Option<FullDataset>,
    pub observed: ObservedDataset,
    pub train: ObservedDataset,
    pub nuisance: ObservedDataset,
    pub test: ObservedDataset,
    pub full_test: Option<FullDataset>,
    pub classifier: ImputeLogisticClassifier,
}

impl Prepared {
    /// Builds the configured policy (fitting it on the training split if
    /// needed).
    pub fn policy(&self, cfg: &ExperimentConfig, spec: &PolicySpec) -> Result<AnyPolicy> {
        build_policy(spec, self.test.schema(), &self.train, &self.classifier, &self.resolved, cfg.seed)
    }
}

/// Resolves the config, loads the data, splits it and fits the classifier.
pub fn prepare_experiment(cfg: &ExperimentConfig) -> Result<Prepared> {
    let resolved = cfg.resolve()?;
    let (full, observed) = load_data(cfg, &resolved)?;
    let splits = split_rows(cfg, observed.n_rows())?;
    let train = observed.subset(&splits.train);
    let nuisance = observed.subset(&splits.nuisance);
    let test = observed.subset(&splits.test);
    let full_test = full.as_ref().map(|f| f.subset(&splits.test));
    let classifier = fit_classifier(&train, &cfg.classifier, cfg.seed)?;
    Ok(Prepared {
        resolved,
        full,
        observed,
        train,
        nuisance,
        test,
        full_test,
        classifier,
    })
}

/// Runs a configured experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let prep = prepare_experiment(cfg)?;
    let res = &prep.resolved;

    let mut data = BTreeMap::new();
    data.insert("n_rows".to_string(), json!(prep.observed.n_rows()));
    data.insert("n_train".to_string(), json!(prep.train.n_rows()));
    data.insert("n_nuisance".to_string(), json!(prep.nuisance.n_rows()));
    data.insert("n_test".to_string(), json!(prep.test.n_rows()));
    data.insert("complete_fraction".to_string(), json!(prep.observed.complete_fraction()));
    data.insert("complete_fraction_test".to_string(), json!(prep.test.complete_fraction()));

    let run = PolicyRun {
        cfg,
        res,
        classifier: &prep.classifier,
        train: &prep.train,
        nuisance: &prep.nuisance,
        test: &prep.test,
        full_test: prep.full_test.as_ref(),
    };
    let mut props = Propensities {
        nuisance: &prep.nuisance,
        res,
        corruption: cfg.nuisances.corruption,
        learned_mar: None,
        learned_pattern: None,
    };
    let policies = (0..cfg.policies.len())
        .map(|i| run.run(i, &mut props))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        data,
        policies,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_convergence_csv<W: std::io::Write>(points: &[ConvergencePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGENCE_CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.estimator.clone(),
            p.policy.clone(),
            p.n.to_string(),
            p.estimate.to_string(),
            opt(p.ci_low),
            opt(p.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the resolved config (without `output_dir`), per-policy estimate tables, the convergence
/// table and the diagnostics into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    // The output location is left out so that the files do not depend on it.
    let mut config = result.config.clone();
    config.output_dir = None;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let mut all_points = Vec::new();
    let mut per_policy = serde_json::Map::new();
    for p in &result.policies {
        let pdir = dir.join(&p.name);
        fs::create_dir_all(&pdir)?;
        write_reports_csv(&p.reports, fs::File::create(pdir.join("estimates.csv"))?)?;
        all_points.extend(p.convergence.iter().cloned());
        per_policy.insert(p.name.clone(), json!(p.diagnostics));
    }
    write_convergence_csv(&all_points, fs::File::create(dir.join("convergence.csv"))?)?;
    let diagnostics = json!({
        "seed": result.config.seed,
        "data": result.data,
        "policies": per_policy,
    });
    let mut text = serde_json::to_string_pretty(&diagnostics)?;
    text.push('\n');
    fs::write(dir.join("diagnostics.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_are_one_two_five() {
        assert_eq!(checkpoints(1), vec![1]);
        assert_eq!(checkpoints(120), vec![1, 2, 5, 10, 20, 50, 100, 120]);
        assert_eq!(checkpoints(100), vec![1, 2, 5, 10, 20, 50, 100]);
        assert!(checkpoints(0).is_empty());
    }
}
