//! Config validation and end-to-end experiment runs.

use std::fs;
use std::io::Write;

use afape_core::AfapeError;
use afape_core::harness::{run_experiment, write_outputs, ExperimentConfig};

const BASE: &str = r#"
name = "t"
seed = 5

[data]
kind = "synthetic"
n_rows = 4000

[costs]
c_mc = 14.0

[mechanism]
preset = "mar"

[splits]
train = 0.3
nuisance = 0.3
test = 0.4

[[policies]]
name = "random-50"
kind = "subset_random"
p_acquire = 0.5

[estimators]
list = ["J", "Blocking", "IPW-Semi-gt", "IPW-Semi", "DRL-Semi"]

[bootstrap]
replicates = 20
"#;

fn config(overrides: &[&str]) -> afape_core::Result<ExperimentConfig> {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml_with_overrides(BASE, &o)
}

fn config_error(cfg: afape_core::Result<ExperimentConfig>) -> String {
    let err = cfg.and_then(|c| run_experiment(&c).map(|_| ())).expect_err("expected a config error");
    match err {
        AfapeError::Config(msg) => msg,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn mar_estimator_under_mnar_points_to_the_hybrid() {
    let msg = config_error(config(&["mechanism.preset=\"mnar\""]));
    assert!(msg.contains("IPW-Semi-Miss"), "{msg}");
}

#[test]
fn invalid_configs_are_rejected() {
    let cases: &[&[&str]] = &[
        &["estimators.list=[\"IPW-Bogus\"]"],
        &["estimators.list=[\"Blocking-gt\"]"],
        &["policies.0.name=\"a/b\""],
        &["splits.train=0.9"],
        &["splits.test=0.0"],
        &["policies.0.p_acquire=1.5"],
        &["estimators.list=[\"IPW-Semi-Miss\"]"],
        &["nuisances.adjustment=[\"superX9\"]", "estimators.list=[\"IPW-Semi-Miss\"]"],
        &["nuisances.conditioning=[\"nope\"]"],
        &["estimators.n_traj=0"],
        &["data.n_rows=0"],
        &["data.std_devs=[1.0, 2.0]"],
        &["mechanism.preset=\"sometimes\""],
        &["policies.0.kind=\"fixed_order\"", "policies.0.order=[\"superX7\"]"],
        &["policies.0.kind=\"fixed_order\"", "policies.0.order=[\"superX0\"]"],
        &["unknown_key=1"],
    ];
    for case in cases {
        config_error(config(case));
    }
}

#[test]
fn duplicate_policy_names_are_rejected() {
    let text = format!("{BASE}\n[[policies]]\nname = \"random-50\"\nkind = \"stop_always\"\n");
    let msg = config_error(ExperimentConfig::from_toml(&text));
    assert!(msg.contains("duplicate"), "{msg}");
}

#[test]
fn ground_truth_estimators_need_a_mechanism() {
    let mut cfg = config(&["estimators.list=[\"IPW-Semi-gt\"]"]).unwrap();
    cfg.mechanism = None;
    assert!(matches!(cfg.resolve(), Err(AfapeError::Config(_))));
}

fn write_csv(dir: &std::path::Path, rows: &[[&str; 5]]) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut f = fs::File::create(&path).unwrap();
    // Columns deliberately out of schema order.
    writeln!(f, "X3,y,X0,X2,X1").unwrap();
    for r in rows {
        writeln!(f, "{}", r.join(",")).unwrap();
    }
    path
}

fn csv_rows(n: usize, missing: bool) -> Vec<[String; 5]> {
    (0..n)
        .map(|i| {
            let x = |k: usize| format!("{:.3}", ((i * 7 + k * 13) % 17) as f64 / 4.0 - 2.0);
            let label = ((i * 7) % 17 > 8) as u32;
            let x1 = if missing && i % 3 == 0 { "?".to_string() } else { x(1) };
            let (x2, x3) = if missing && i % 4 == 0 { ("?".to_string(), "?".to_string()) } else { (x(2), x(3)) };
            [x3, label.to_string(), x(0), x2, x1]
        })
        .collect()
}

fn csv_config(path: &std::path::Path, mechanism: bool, estimators: &str) -> ExperimentConfig {
    let mut text = format!(
        "name = \"csv\"\nseed = 2\n[data]\nkind = \"csv\"\npath = {:?}\nlabel_column = \"y\"\n[costs]\nc_mc = 14.0\n\
         [splits]\ntrain = 0.3\nnuisance = 0.3\ntest = 0.4\n[[policies]]\nname = \"random-50\"\nkind = \"subset_random\"\n\
         p_acquire = 0.5\n[estimators]\nlist = {estimators}\n[bootstrap]\nreplicates = 10\n",
        path.display().to_string()
    );
    if mechanism {
        text.push_str("[mechanism]\npreset = \"mar\"\n");
    }
    ExperimentConfig::from_toml(&text).unwrap()
}

fn as_refs(rows: &[[String; 5]]) -> Vec<[&str; 5]> {
    rows.iter().map(|r| [&*r[0], &*r[1], &*r[2], &*r[3], &*r[4]]).collect()
}

#[test]
fn csv_with_missing_values_runs_without_a_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let rows = csv_rows(600, true);
    let path = write_csv(dir.path(), &as_refs(&rows));
    let cfg = csv_config(&path, false, "[\"Blocking\", \"CC\", \"IPW-Semi\", \"DRL-Semi\"]");
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.data["n_rows"], 600);
    let cf = res.data["complete_fraction"].as_f64().unwrap();
    assert!(cf > 0.0 && cf < 1.0, "{cf}");
    let p = res.policy("random-50").unwrap();
    for name in ["Blocking", "CC", "IPW-Semi", "DRL-Semi"] {
        assert!(p.report(name).unwrap().point.is_finite(), "{name}");
    }
}

#[test]
fn csv_with_missing_values_and_a_mechanism_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let rows = csv_rows(200, true);
    let path = write_csv(dir.path(), &as_refs(&rows));
    config_error(Ok(csv_config(&path, true, "[\"Blocking\"]")));
}

#[test]
fn complete_csv_with_a_mechanism_supports_the_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let rows = csv_rows(600, false);
    let path = write_csv(dir.path(), &as_refs(&rows));
    let res = run_experiment(&csv_config(&path, true, "[\"J\", \"IPW-Semi-gt\"]")).unwrap();
    let p = res.policy("random-50").unwrap();
    assert!(p.report("J").unwrap().point.is_finite());
}

#[test]
fn greedy_and_fixed_order_policies_run() {
    let text = format!(
        "{BASE}\n[[policies]]\nname = \"greedy\"\nkind = \"greedy\"\nexplore = 0.5\n\
         [[policies]]\nname = \"order\"\nkind = \"fixed_order\"\norder = [\"superX2\", \"superX1\"]\n\
         [policies.simulation]\nkind = \"subset_random\"\np_acquire = 0.5\n"
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.policies.len(), 3);
    for p in &res.policies {
        let j = p.report("J").unwrap().point;
        assert!(j.is_finite() && j >= 0.0, "{}: {j}", p.name);
    }
}

#[test]
fn convergence_ends_at_the_full_estimate() {
    let cfg = config(&[]).unwrap();
    let res = run_experiment(&cfg).unwrap();
    let p = res.policy("random-50").unwrap();
    let n_test = res.data["n_test"].as_u64().unwrap() as usize;
    for r in &p.reports {
        let last = p
            .convergence
            .iter()
            .filter(|c| c.estimator == r.estimator)
            .max_by_key(|c| c.n)
            .unwrap();
        assert_eq!(last.n, n_test);
        assert!((last.estimate - r.point).abs() <= 1e-12 * r.point.abs().max(1.0), "{}", r.estimator);
    }
}

#[test]
fn overrides_change_the_run() {
    let a = run_experiment(&config(&[]).unwrap()).unwrap();
    let b = run_experiment(&config(&["seed=6"]).unwrap()).unwrap();
    let c = run_experiment(&config(&["policies.0.p_acquire=0.1"]).unwrap()).unwrap();
    let j = |r: &afape_core::harness::ExperimentResult| r.policies[0].report("J").unwrap().point;
    assert_ne!(j(&a), j(&b));
    assert_ne!(j(&a), j(&c));
    assert_eq!(c.config.policies[0].name, "random-50");
}

#[test]
fn runs_are_deterministic_and_outputs_round_trip() {
    let cfg = config(&[]).unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&a, da.path()).unwrap();
    write_outputs(&b, db.path()).unwrap();
    for f in ["config.toml", "convergence.csv", "diagnostics.json", "random-50/estimates.csv"] {
        let x = fs::read(da.path().join(f)).unwrap();
        assert_eq!(x, fs::read(db.path().join(f)).unwrap(), "{f}");
    }
    let written = fs::read_to_string(da.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&written).unwrap(), cfg);
}
