use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{presets, MissingnessMechanism, MissingnessRule};
use crate::domain::{CostSpec, CostTarget, SuperMask, SuperfeatureSchema};
use crate::error::{AfapeError, Result};
use crate::estimators::{BootstrapConfig, Normalization};
use crate::nuisance::{Corruption, QFitConfig};
use crate::policy::{ClassifierConfig, GreedyConfig};

fn config_err(msg: impl Into<String>) -> AfapeError {
    AfapeError::Config(msg.into())
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target: CostTarget,
    /// Where `run` writes its outputs. The CLI can override it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    /// Defaults to the synthetic four-column schema.
    #[serde(default)]
    pub schema: Option<SuperfeatureSchema>,
    pub costs: CostsConfig,
    /// Missingness applied to fully observed data. Without it the data are
    /// used as read and ground-truth quantities are unavailable.
    #[serde(default)]
    pub mechanism: Option<MechanismConfig>,
    pub splits: SplitConfig,
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub nuisances: NuisanceConfig,
    pub estimators: EstimatorsConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

fn default_target() -> CostTarget {
    CostTarget::Misclassification
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Multivariate normal features with the threshold label rule.
    Synthetic {
        n_rows: usize,
        /// Diagonal covariance given as standard deviations.
        #[serde(default)]
        std_devs: Option<Vec<f64>>,
        /// Full covariance matrix, row by row. Overrides `std_devs`.
        #[serde(default)]
        covariance: Option<Vec<Vec<f64>>>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_sentinel")]
        sentinel: String,
    },
}

fn default_sentinel() -> String {
    "?".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub c_mc: f64,
    /// Per-superfeature acquisition costs; defaults to the schema's costs.
    #[serde(default)]
    pub c_acq: Option<Vec<f64>>,
}

/// Either a named preset (`mar`, `mnar`, `none`) or explicit rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MechanismConfig {
    Preset { preset: String },
    Rules { rules: Vec<MissingnessRule> },
}

impl MechanismConfig {
    pub fn resolve(&self, schema: &SuperfeatureSchema) -> Result<MissingnessMechanism> {
        let mech = match self {
            MechanismConfig::Preset { preset } => match preset.as_str() {
                "mar" => presets::mar(),
                "mnar" => presets::mnar(),
                "none" => MissingnessMechanism::always(schema),
                other => return Err(config_err(format!("unknown mechanism preset `{other}` (known: mar, mnar, none)"))),
            },
            MechanismConfig::Rules { rules } => MissingnessMechanism { rules: rules.clone() },
        };
        mech.validate(schema).map_err(|e| config_err(e.to_string()))?;
        Ok(mech)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub nuisance: f64,
    pub test: f64,
    /// Assign rows to splits by a seeded permutation instead of file order.
    #[serde(default = "yes")]
    pub shuffle: bool,
}

fn yes() -> bool {
    true
}

impl SplitConfig {
    /// Row counts of the three splits.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let f = [self.train, self.nuisance, self.test];
        if f.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(config_err("split fractions must be positive"));
        }
        if f.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(config_err("split fractions sum to more than 1"));
        }
        let sizes = f.map(|x| (x * n as f64 + 1e-9).floor() as usize);
        if sizes.contains(&0) {
            return Err(config_err(format!("a split is empty for {n} rows")));
        }
        Ok(sizes)
    }
}

/// Policy families available in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Acquires each costly superfeature with probability `p_acquire`.
    SubsetRandom { p_acquire: f64 },
    StopAlways,
    /// Superfeature names in acquisition order.
    FixedOrder { order: Vec<String> },
    /// Fitted-Q greedy policy trained on the train split from rollouts of
    /// the subset-random policy with probability `explore`.
    Greedy {
        #[serde(default = "half")]
        explore: f64,
        #[serde(default)]
        fit: GreedyConfig,
    },
}

fn half() -> f64 {
    0.5
}

impl PolicySpec {
    fn validate(&self, schema: &SuperfeatureSchema) -> Result<()> {
        match self {
            PolicySpec::SubsetRandom { p_acquire: p } | PolicySpec::Greedy { explore: p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(config_err(format!("acquisition probability {p} is outside [0, 1]")));
                }
            }
            PolicySpec::FixedOrder { order } => {
                for name in order {
                    let j = schema
                        .superfeature_index(name)
                        .ok_or_else(|| config_err(format!("unknown superfeature `{name}` in policy order")))?;
                    if schema.free().contains(j) {
                        return Err(config_err(format!("superfeature `{name}` is free and cannot be acquired")));
                    }
                }
            }
            PolicySpec::StopAlways => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub name: String,
    #[serde(flatten)]
    pub spec: PolicySpec,
    /// Policy that drives the semi-offline simulation (defaults to the
    /// evaluated policy itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<PolicySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    /// Superfeatures the learned MAR propensity conditions on. Defaults to
    /// the free set.
    pub conditioning: Option<Vec<String>>,
    /// Adjustment superfeatures of the hybrid estimator.
    pub adjustment: Vec<String>,
    /// Rollouts per nuisance-split row used to fit the Q-function.
    pub n_traj: usize,
    pub q: QFitConfig,
    /// Damage applied to the propensity of `-corrupt` estimators.
    pub corruption: Corruption,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            conditioning: None,
            adjustment: Vec::new(),
            n_traj: 1,
            q: QFitConfig::default(),
            corruption: Corruption::ZeroSlopes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsConfig {
    pub list: Vec<String>,
    #[serde(default)]
    pub normalization: Normalization,
    /// Rollouts per test row.
    #[serde(default = "one")]
    pub n_traj: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub enabled: bool,
    /// Bootstrap intervals at every checkpoint.
    pub ci: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { enabled: true, ci: true }
    }
}

/// Estimator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    GroundTruth,
    Blocking,
    CompleteCase,
    ImpMean,
    IpwMiss,
    IpwSemi,
    DmSemi,
    DrlSemi,
    IpwSemiMiss,
}

/// Which propensity model a weighting estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensityChoice {
    Learned,
    GroundTruth,
    /// Ground truth (or learned, without a mechanism) damaged per
    /// `nuisances.corruption`.
    Corrupted,
}

/// A parsed estimator name such as `IPW-Semi-gt` or `DRL-Semi-corrupt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub propensity: PropensityChoice,
}

const KINDS: [(&str, EstimatorKind); 9] = [
    ("J", EstimatorKind::GroundTruth),
    ("Blocking", EstimatorKind::Blocking),
    ("CC", EstimatorKind::CompleteCase),
    ("Imp-Mean", EstimatorKind::ImpMean),
    ("IPW-Miss", EstimatorKind::IpwMiss),
    ("IPW-Semi", EstimatorKind::IpwSemi),
    ("DM-Semi", EstimatorKind::DmSemi),
    ("DRL-Semi", EstimatorKind::DrlSemi),
    ("IPW-Semi-Miss", EstimatorKind::IpwSemiMiss),
];

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        KINDS.iter().find(|(_, k)| *k == self).map(|(s, _)| *s).unwrap_or("?")
    }

    fn uses_propensity(self) -> bool {
        matches!(
            self,
            EstimatorKind::IpwMiss | EstimatorKind::IpwSemi | EstimatorKind::DrlSemi | EstimatorKind::IpwSemiMiss
        )
    }

    /// Valid only when missingness is at random given the free set.
    pub fn assumes_mar(self) -> bool {
        matches!(
            self,
            EstimatorKind::IpwMiss | EstimatorKind::IpwSemi | EstimatorKind::DmSemi | EstimatorKind::DrlSemi
        )
    }

    pub fn needs_q(self) -> bool {
        matches!(self, EstimatorKind::DmSemi | EstimatorKind::DrlSemi)
    }
}

impl FromStr for EstimatorSpec {
    type Err = AfapeError;

    fn from_str(s: &str) -> Result<Self> {
        let (base, propensity) = if let Some(b) = s.strip_suffix("-gt") {
            (b, PropensityChoice::GroundTruth)
        } else if let Some(b) = s.strip_suffix("-corrupt") {
            (b, PropensityChoice::Corrupted)
        } else {
            (s, PropensityChoice::Learned)
        };
        let unknown = || {
            let known: Vec<&str> = KINDS.iter().map(|(n, _)| *n).collect();
            config_err(format!(
                "unknown estimator `{s}` (known: {}; weighting estimators accept a -gt or -corrupt suffix)",
                known.join(", ")
            ))
        };
        let kind = KINDS.iter().find(|(n, _)| *n == base).map(|(_, k)| *k).ok_or_else(unknown)?;
        if propensity != PropensityChoice::Learned && !kind.uses_propensity() {
            return Err(unknown());
        }
        if kind == EstimatorKind::IpwSemiMiss && propensity == PropensityChoice::Corrupted {
            return Err(unknown());
        }
        Ok(EstimatorSpec { kind, propensity })
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.label())?;
        match self.propensity {
            PropensityChoice::Learned => Ok(()),
            PropensityChoice::GroundTruth => f.write_str("-gt"),
            PropensityChoice::Corrupted => f.write_str("-corrupt"),
        }
    }
}

/// Validated pieces of a config that later stages need.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub schema: SuperfeatureSchema,
    pub costs: CostSpec,
    pub mechanism: Option<MissingnessMechanism>,
    pub estimators: Vec<EstimatorSpec>,
    pub conditioning: SuperMask,
    pub adjustment: SuperMask,
}

fn names_to_mask(schema: &SuperfeatureSchema, names: &[String], what: &str) -> Result<SuperMask> {
    let mut m = SuperMask::EMPTY;
    for n in names {
        let j = schema
            .superfeature_index(n)
            .ok_or_else(|| config_err(format!("unknown superfeature `{n}` in {what}")))?;
        m.insert(j);
    }
    Ok(m)
}

fn valid_policy_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && s != "." && s != ".."
}

impl ExperimentConfig {
    /// Parses TOML, applying `key=value` overrides (dotted keys, numeric
    /// segments index arrays) before deserializing.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn schema(&self) -> Result<SuperfeatureSchema> {
        Ok(self.schema.clone().unwrap_or_else(presets::schema))
    }

    /// Checks every cross-field constraint.
    pub fn resolve(&self) -> Result<Resolved> {
        let schema = self.schema()?;
        let c_acq = self
            .costs
            .c_acq
            .clone()
            .unwrap_or_else(|| schema.superfeatures().iter().map(|s| s.cost).collect());
        let costs = CostSpec::new(c_acq, self.costs.c_mc, &schema).map_err(|e| config_err(e.to_string()))?;
        let mechanism = self.mechanism.as_ref().map(|m| m.resolve(&schema)).transpose()?;
        if matches!(self.data, DataConfig::Synthetic { .. }) && mechanism.is_none() {
            return Err(config_err("synthetic data need a missingness mechanism"));
        }
        if let DataConfig::Synthetic { n_rows, std_devs, covariance } = &self.data {
            if *n_rows == 0 {
                return Err(config_err("data.n_rows must be positive"));
            }
            let d = schema.n_raw();
            if let Some(c) = covariance {
                if c.len() != d || c.iter().any(|r| r.len() != d) {
                    return Err(config_err(format!("covariance must be {d} x {d}")));
                }
            } else if let Some(s) = std_devs {
                if s.len() != d || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(config_err(format!("std_devs needs {d} positive entries")));
                }
            }
        }
        self.splits.sizes(1_000_000)?;

        if self.policies.is_empty() {
            return Err(config_err("no policies configured"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if !valid_policy_name(&p.name) {
                return Err(config_err(format!("policy name `{}` must use only letters, digits, '-', '_' and '.'", p.name)));
            }
            if self.policies[..i].iter().any(|q| q.name == p.name) {
                return Err(config_err(format!("duplicate policy name `{}`", p.name)));
            }
            p.spec.validate(&schema)?;
            if let Some(s) = &p.simulation {
                if matches!(s, PolicySpec::Greedy { .. }) {
                    return Err(config_err("a greedy policy cannot serve as simulation policy"));
                }
                s.validate(&schema)?;
            }
        }

        if self.estimators.list.is_empty() {
            return Err(config_err("no estimators configured"));
        }
        if self.estimators.n_traj == 0 || self.nuisances.n_traj == 0 {
            return Err(config_err("n_traj must be at least 1"));
        }
        let estimators: Vec<EstimatorSpec> =
            self.estimators.list.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        let conditioning = match &self.nuisances.conditioning {
            Some(names) => names_to_mask(&schema, names, "nuisances.conditioning")?,
            None => schema.free(),
        };
        let adjustment = names_to_mask(&schema, &self.nuisances.adjustment, "nuisances.adjustment")?;
        let mnar = mechanism.as_ref().is_some_and(|m| !m.is_mar(&schema));
        for e in &estimators {
            if mnar && e.kind.assumes_mar() {
                return Err(config_err(format!(
                    "estimator `{e}` assumes missingness at random, but the mechanism is missing-not-at-random; \
                     use the hybrid estimator `IPW-Semi-Miss{}` with nuisances.adjustment instead",
                    if e.propensity == PropensityChoice::GroundTruth { "-gt" } else { "" }
                )));
            }
            let needs_truth = e.kind == EstimatorKind::GroundTruth
                || matches!(e.propensity, PropensityChoice::GroundTruth);
            if needs_truth && mechanism.is_none() {
                return Err(config_err(format!(
                    "estimator `{e}` needs fully observed data and a known mechanism"
                )));
            }
            if e.kind == EstimatorKind::IpwSemiMiss && adjustment.is_empty() {
                return Err(config_err(format!("estimator `{e}` needs a non-empty nuisances.adjustment")));
            }
        }
        Ok(Resolved {
            schema,
            costs,
            mechanism,
            estimators,
            conditioning,
            adjustment,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `a.b.0.c = value` inside `doc`, creating tables as needed.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(config_err(format!("override key `{key}` is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut root = toml::Value::Table(std::mem::take(doc));
    let result = set_path(&mut root, &path, value, key);
    if let toml::Value::Table(t) = root {
        *doc = t;
    }
    result
}

fn set_path(root: &mut toml::Value, path: &[&str], value: toml::Value, key: &str) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut slot = root;
    for seg in parents {
        slot = descend(slot, seg, key)?;
    }
    match slot {
        toml::Value::Table(t) => {
            t.insert((*last).to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = last
                .parse()
                .map_err(|_| config_err(format!("`{last}` in `{key}` must be an array index")))?;
            let n = a.len();
            *a.get_mut(i).ok_or_else(|| config_err(format!("index {i} out of range ({n}) in `{key}`")))? = value;
        }
        _ => return Err(config_err(format!("`{key}` does not name a table entry"))),
    }
    Ok(())
}

fn descend<'a>(slot: &'a mut toml::Value, seg: &str, key: &str) -> Result<&'a mut toml::Value> {
    match slot {
        toml::Value::Table(t) => Ok(t
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(a) => {
            let i: usize = seg
                .parse()
                .map_err(|_| config_err(format!("`{seg}` in `{key}` must be an array index")))?;
            let n = a.len();
            a.get_mut(i).ok_or_else(|| config_err(format!("index {i} out of range ({n}) in `{key}`")))
        }
        _ => Err(config_err(format!("`{key}` descends into a non-table value"))),
    }
}
