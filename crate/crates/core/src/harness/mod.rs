//! Config-driven experiments and the exact-enumeration oracle suite.

mod config;
mod experiment;
pub mod oracle;

pub use config::{
    apply_override, ConvergenceConfig, CostsConfig, DataConfig, EstimatorKind, EstimatorSpec, EstimatorsConfig,
    ExperimentConfig, MechanismConfig, NuisanceConfig, PolicyConfig, PolicySpec, PropensityChoice, Resolved,
    SplitConfig,
};
pub use experiment::{
    checkpoints, prepare_experiment, run_experiment, write_convergence_csv, write_outputs, ConvergencePoint, ExperimentResult,
    PolicyResult, Prepared, CONVERGENCE_CSV_HEADER,
};
pub use oracle::{run_oracle_suite, OracleCheck, OracleConfig, OracleReport};
