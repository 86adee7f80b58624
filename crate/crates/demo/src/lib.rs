//! Browser bindings. Every function returns a JSON string; errors are
//! returned as `{"error": "..."}` so the page can show them inline.

use afape_core::domain::{count_trajectories, CostTarget};
use afape_core::harness::{run_experiment, run_oracle_suite, ExperimentConfig, OracleConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Number of distinct trajectories for `m = 1..=max_m` costly superfeatures.
#[wasm_bindgen]
pub fn trajectory_counts(max_m: u32) -> String {
    respond((|| {
        if max_m == 0 || max_m > 30 {
            return Err("m must be between 1 and 30".to_string());
        }
        let rows = (1..=max_m as u64)
            .map(|m| {
                count_trajectories(m)
                    .map(|c| json!({ "m": m, "count": c.to_string() }))
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(json!(rows))
    })())
}

fn comparison_config(n_rows: u32, p_acquire: f64, mnar: bool, seed: u32) -> Result<ExperimentConfig, String> {
    if !(1000..=200_000).contains(&n_rows) {
        return Err("rows must be between 1000 and 200000".to_string());
    }
    if !(0.0..=1.0).contains(&p_acquire) {
        return Err("acquisition probability must be in [0, 1]".to_string());
    }
    let (preset, adjustment, estimators) = if mnar {
        ("mnar", r#"["superX1"]"#, r#"["J", "Blocking", "CC", "Imp-Mean", "IPW-Semi-Miss-gt", "IPW-Semi-Miss"]"#)
    } else {
        ("mar", "[]", r#"["J", "Blocking", "CC", "Imp-Mean", "IPW-Miss-gt", "IPW-Semi-gt", "IPW-Semi", "DM-Semi", "DRL-Semi"]"#)
    };
    let text = format!(
        r#"
name = "demo"
seed = {seed}
[data]
kind = "synthetic"
n_rows = {n_rows}
std_devs = [1.5, 2.5, 1.0, 1.0]
[costs]
c_mc = 14.0
[mechanism]
preset = "{preset}"
[splits]
train = 0.2
nuisance = 0.4
test = 0.4
[[policies]]
name = "policy"
kind = "subset_random"
p_acquire = {p_acquire:?}
[nuisances]
adjustment = {adjustment}
[estimators]
list = {estimators}
[bootstrap]
replicates = 100
[convergence]
ci = false
"#
    );
    ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())
}

/// Generates synthetic data with MAR or MNAR missingness and compares the
/// estimators on a subset-random policy. Returns the reports, the
/// convergence curves and the complete-case fraction.
#[wasm_bindgen]
pub fn compare_estimators(n_rows: u32, p_acquire: f64, mnar: bool, seed: u32) -> String {
    respond((|| {
        let cfg = comparison_config(n_rows, p_acquire, mnar, seed)?;
        let result = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let p = &result.policies[0];
        let curves: Vec<Value> = p
            .convergence
            .iter()
            .map(|c| json!({ "estimator": c.estimator, "n": c.n, "estimate": c.estimate }))
            .collect();
        Ok(json!({
            "data": result.data,
            "reports": p.reports,
            "convergence": curves,
        }))
    })())
}

/// Runs the exact-enumeration oracle suite. `corrupt` is `"none"`,
/// `"propensity"` or `"q"`.
#[wasm_bindgen]
pub fn oracle(n_rows: u32, corrupt: &str, seed: u32) -> String {
    respond((|| {
        let cfg = OracleConfig {
            n_rows: n_rows as usize,
            seed: seed as u64,
            target: CostTarget::Total,
            corrupt_propensity: corrupt == "propensity",
            corrupt_q: corrupt == "q",
            ..OracleConfig::default()
        };
        if !matches!(corrupt, "none" | "propensity" | "q") {
            return Err(format!("unknown corruption `{corrupt}`"));
        }
        let report = run_oracle_suite(&cfg).map_err(|e| e.to_string())?;
        let checks: Vec<Value> = report
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "value": c.value,
                    "reference": c.reference,
                    "tolerance": c.tolerance,
                    "expect_within": c.expect_within,
                    "ok": c.ok(),
                })
            })
            .collect();
        Ok(json!({ "exact_j": report.exact_j, "passed": report.passed(), "checks": checks }))
    })())
}
