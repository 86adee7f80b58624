use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use afape_core::datagen::{apply_missingness, generate_synthetic, presets, read_dataset_csv, write_dataset_csv, MissingnessMechanism};
use afape_core::domain::{
    count_trajectories, read_trajectories_csv, write_reports_csv, write_trajectories_csv, CostSpec, CostTarget,
    EstimateReport, ObservedDataset, SuperMask, SuperfeatureSchema,
};
use afape_core::estimators::{
    estimate_blocking, estimate_ipw_semi, estimate_ipw_semi_miss, BootstrapConfig, Normalization,
};
use afape_core::harness::{
    run_experiment, run_oracle_suite, write_outputs, EstimatorKind, EstimatorSpec, ExperimentConfig, OracleConfig,
    PropensityChoice,
};
use afape_core::nuisance::{fit_propensity_mar, fit_propensity_mnar_pattern, PropensityModel};
use afape_core::policy::{fit_classifier, AnyPolicy, ClassifierConfig, FixedOrderPolicy, ImputeLogisticClassifier, SubsetRandomPolicy};
use afape_core::simulate::Simulator;
use afape_core::{checkpoint, AfapeError};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_ORACLE: u8 = 3;

#[derive(Parser)]
#[command(name = "afape", version, about = "Evaluate active feature acquisition policies from data with missingness")]
struct Cli {
    /// Worker threads for rollouts, fitting and bootstrap (0 = all cores).
    #[arg(long, global = true, env = "AFAPE_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data and apply a missingness mechanism.
    Generate(GenerateArgs),
    /// Roll out a policy on a dataset and write the trajectories.
    Simulate(SimulateArgs),
    /// Estimate the expected cost from a dataset and its trajectories.
    Estimate(EstimateArgs),
    /// Run a configured experiment and write its outputs.
    Experiment(ExperimentArgs),
    /// Check the estimators against an exactly enumerable environment.
    Oracle(OracleArgs),
    /// Number of distinct trajectories with m costly superfeatures.
    CountTraj {
        #[arg(required = true)]
        m: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Mar,
    Mnar,
    None,
}

impl MechanismArg {
    fn resolve(self) -> Option<MissingnessMechanism> {
        match self {
            MechanismArg::Mar => Some(presets::mar()),
            MechanismArg::Mnar => Some(presets::mnar()),
            MechanismArg::None => None,
        }
    }
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 150_000)]
    n_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mar")]
    mechanism: MechanismArg,
    /// Data with missingness.
    #[arg(long)]
    out: PathBuf,
    /// Also write the fully observed data.
    #[arg(long)]
    full_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SchemaArg {
    /// Superfeature schema as JSON. Defaults to the synthetic four-column schema.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl SchemaArg {
    fn load(&self) -> Result<Arc<SuperfeatureSchema>> {
        Ok(Arc::new(match &self.schema {
            Some(p) => serde_json::from_str(&read(p)?).map_err(|e| config_error(format!("{}: {e}", p.display())))?,
            None => SuperfeatureSchema::synthetic_default(),
        }))
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long)]
    data: PathBuf,
    /// `random-<percent>`, `random:<prob>`, `stop` or `fixed:<sf>,<sf>,...`.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 14.0)]
    c_mc: f64,
    #[arg(long, default_value_t = 1)]
    n_traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classifier checkpoint. Without it a classifier is fitted on the data.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Save the classifier used for the rollouts.
    #[arg(long)]
    classifier_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    trajectories: PathBuf,
    /// Comma-separated: Blocking, IPW-Semi[-gt], IPW-Semi-Miss[-gt].
    #[arg(long, value_delimiter = ',', default_value = "Blocking,IPW-Semi")]
    estimators: Vec<String>,
    #[arg(long, default_value = "J_mc")]
    target: String,
    /// Mechanism that produced the data, for `-gt` estimators.
    #[arg(long, value_enum, default_value = "none")]
    mechanism: MechanismArg,
    /// Superfeatures the learned MAR propensity conditions on. Defaults to the free ones.
    #[arg(long, value_delimiter = ',')]
    conditioning: Vec<String>,
    /// Adjustment superfeatures for the hybrid estimator.
    #[arg(long, value_delimiter = ',')]
    adjustment: Vec<String>,
    #[arg(long, default_value_t = false)]
    raw_weights: bool,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reports as CSV. Printed as JSON to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    config: PathBuf,
    /// Override a config key, e.g. `--set seed=3` or `--set policies.0.p_acquire=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory. Overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200_000)]
    n_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "J_total")]
    target: String,
    /// Replace the propensity with one whose slopes are zeroed.
    #[arg(long)]
    corrupt_propensity: bool,
    /// Replace the Q-function with zero.
    #[arg(long)]
    corrupt_q: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    AfapeError::Config(msg.into()).into()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn load_data(path: &Path, schema: Arc<SuperfeatureSchema>) -> Result<ObservedDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_dataset_csv(BufReader::new(file), schema)?)
}

fn parse_policy(s: &str, schema: &SuperfeatureSchema) -> Result<AnyPolicy> {
    let bad = || config_error(format!("cannot parse policy `{s}`"));
    if s == "stop" {
        return Ok(AnyPolicy::StopAlways);
    }
    if let Some(pct) = s.strip_prefix("random-") {
        let p: f64 = pct.parse().map_err(|_| bad())?;
        return random_policy(p / 100.0);
    }
    if let Some(p) = s.strip_prefix("random:") {
        return random_policy(p.parse().map_err(|_| bad())?);
    }
    if let Some(list) = s.strip_prefix("fixed:") {
        let order = list
            .split(',')
            .map(|n| {
                schema
                    .superfeature_index(n.trim())
                    .ok_or_else(|| config_error(format!("unknown superfeature `{n}`")))
            })
            .collect::<Result<_>>()?;
        return Ok(AnyPolicy::FixedOrder(FixedOrderPolicy { order }));
    }
    Err(bad())
}

fn random_policy(p: f64) -> Result<AnyPolicy> {
    if !(0.0..=1.0).contains(&p) {
        return Err(config_error(format!("acquisition probability {p} outside [0, 1]")));
    }
    Ok(AnyPolicy::SubsetRandom(SubsetRandomPolicy::new(p)))
}

fn names_to_mask(schema: &SuperfeatureSchema, names: &[String]) -> Result<SuperMask> {
    let mut m = SuperMask::EMPTY;
    for n in names {
        let j = schema
            .superfeature_index(n)
            .ok_or_else(|| config_error(format!("unknown superfeature `{n}`")))?;
        m.insert(j);
    }
    Ok(m)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let schema = Arc::new(presets::schema());
    let full = generate_synthetic(schema.clone(), a.n_rows, &presets::covariance(), a.seed)?;
    let observed = match a.mechanism.resolve() {
        Some(m) => apply_missingness(&full, &m, a.seed)?,
        None => full.as_observed(),
    };
    write_dataset_csv(&observed, create(&a.out)?)?;
    if let Some(p) = &a.full_out {
        write_dataset_csv(&full.as_observed(), create(p)?)?;
    }
    println!(
        "wrote {} rows to {} (complete fraction {:.4})",
        observed.n_rows(),
        a.out.display(),
        observed.complete_fraction()
    );
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let schema = a.schema.load()?;
    let data = load_data(&a.data, schema.clone())?;
    let policy = parse_policy(&a.policy, &schema)?;
    let costs = CostSpec::from_schema(&schema, a.c_mc).map_err(|e| config_error(e.to_string()))?;
    let classifier: ImputeLogisticClassifier = match &a.classifier {
        Some(p) => checkpoint::load(p, "classifier", &schema)?,
        None => fit_classifier(&data, &ClassifierConfig::default(), a.seed)?,
    };
    if let Some(p) = &a.classifier_out {
        checkpoint::save(p, "classifier", &schema, &classifier)?;
    }
    let trajs = Simulator::new(&schema, &policy, &classifier, &costs).semi_offline(&data, a.n_traj, a.seed)?;
    write_trajectories_csv(&trajs, create(&a.out)?)?;
    println!("wrote {} trajectories to {}", trajs.len(), a.out.display());
    Ok(())
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let schema = a.schema.load()?;
    let data = load_data(&a.data, schema.clone())?;
    let file = File::open(&a.trajectories).with_context(|| format!("opening {}", a.trajectories.display()))?;
    let trajs = read_trajectories_csv(BufReader::new(file))?;
    let target = CostTarget::parse(&a.target).map_err(|e| config_error(e.to_string()))?;
    let mechanism = a.mechanism.resolve();
    if let Some(m) = &mechanism {
        m.validate(&schema).map_err(|e| config_error(e.to_string()))?;
    }
    let mnar = mechanism.as_ref().is_some_and(|m| !m.is_mar(&schema));
    let conditioning = if a.conditioning.is_empty() {
        schema.free()
    } else {
        names_to_mask(&schema, &a.conditioning)?
    };
    let adjustment = names_to_mask(&schema, &a.adjustment)?;
    let norm = if a.raw_weights {
        Normalization::Raw
    } else {
        Normalization::SelfNormalized
    };
    let boot = BootstrapConfig {
        replicates: a.bootstrap,
        seed: a.seed,
        ..BootstrapConfig::default()
    };

    let mut reports: Vec<EstimateReport> = Vec::new();
    for name in &a.estimators {
        let spec: EstimatorSpec = name.trim().parse().map_err(|e: AfapeError| config_error(e.to_string()))?;
        let propensity = || -> Result<PropensityModel> {
            Ok(match (spec.propensity, &mechanism) {
                (PropensityChoice::GroundTruth, Some(m)) => PropensityModel::ground_truth(m),
                (PropensityChoice::GroundTruth, None) => {
                    return Err(config_error(format!("`{spec}` needs --mechanism")));
                }
                (PropensityChoice::Corrupted, _) => {
                    return Err(config_error("corrupted propensities are only available in experiments"));
                }
                (PropensityChoice::Learned, _) if spec.kind == EstimatorKind::IpwSemiMiss => {
                    fit_propensity_mnar_pattern(&data, adjustment)?
                }
                (PropensityChoice::Learned, _) => fit_propensity_mar(&data, conditioning)?,
            })
        };
        let est = match spec.kind {
            EstimatorKind::Blocking => estimate_blocking(data.n_rows(), &trajs, target)?,
            EstimatorKind::IpwSemi => {
                if mnar {
                    return Err(config_error(format!(
                        "`{spec}` assumes MAR but the mechanism is MNAR; use `IPW-Semi-Miss` with --adjustment"
                    )));
                }
                estimate_ipw_semi(&data, &trajs, &propensity()?, target, norm)?
            }
            EstimatorKind::IpwSemiMiss => {
                if adjustment.is_empty() {
                    return Err(config_error(format!("`{spec}` needs --adjustment")));
                }
                estimate_ipw_semi_miss(&data, &trajs, &propensity()?, adjustment, target, norm)?
            }
            _ => {
                return Err(config_error(format!(
                    "`{spec}` needs the policy and held-out nuisance data; run it through `afape experiment`"
                )));
            }
        };
        reports.push(est.named(spec.to_string()).report_with_ci(&boot)?);
    }
    match &a.out {
        Some(p) => {
            write_reports_csv(&reports, create(p)?)?;
            for r in &reports {
                println!("{:<20} {:.6}", r.estimator, r.point);
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&reports)?),
    }
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let text = read(&a.config)?;
    let mut cfg = ExperimentConfig::from_toml_with_overrides(&text, &a.overrides)?;
    if let Some(out) = &a.out {
        cfg.output_dir = Some(out.clone());
    }
    let Some(dir) = cfg.output_dir.clone() else {
        return Err(config_error("no output directory: set `output_dir` or pass --out"));
    };
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &dir)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for p in &result.policies {
        writeln!(out, "policy {}", p.name)?;
        for r in &p.reports {
            let ci = r.ci().map(|(lo, hi)| format!("[{lo:.4}, {hi:.4}]")).unwrap_or_default();
            writeln!(out, "  {:<20} {:>10.4} {}", r.estimator, r.point, ci)?;
        }
    }
    writeln!(out, "outputs in {}", dir.display())?;
    Ok(())
}

fn oracle(a: &OracleArgs) -> Result<bool> {
    let cfg = OracleConfig {
        n_rows: a.n_rows,
        seed: a.seed,
        target: CostTarget::parse(&a.target).map_err(|e| config_error(e.to_string()))?,
        corrupt_propensity: a.corrupt_propensity,
        corrupt_q: a.corrupt_q,
        ..OracleConfig::default()
    };
    if cfg.corrupt_propensity && cfg.corrupt_q {
        bail!(config_error("pass at most one of --corrupt-propensity and --corrupt-q"));
    }
    let report = run_oracle_suite(&cfg)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("exact J = {:.6}", report.exact_j);
        for c in &report.checks {
            println!("{c}");
        }
        println!("{}", if report.passed() { "oracle suite passed" } else { "oracle suite FAILED" });
    }
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Generate(a) => generate(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Estimate(a) => estimate(a)?,
        Command::Experiment(a) => experiment(a)?,
        Command::Oracle(a) => {
            if !oracle(a)? {
                return Ok(ExitCode::from(EXIT_ORACLE));
            }
        }
        Command::CountTraj { m } => {
            for &m in m {
                println!("{m} {}", count_trajectories(m)?);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<AfapeError>() {
                Some(AfapeError::Config(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
