use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn afape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afape"))
        .args(args)
        .env("AFAPE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL_CONFIG: &str = r#"
name = "small"
seed = 5
[data]
kind = "synthetic"
n_rows = 3000
[costs]
c_mc = 14.0
[mechanism]
preset = "mar"
[splits]
train = 0.2
nuisance = 0.4
test = 0.4
[[policies]]
name = "random-50"
kind = "subset_random"
p_acquire = 0.5
[estimators]
list = ["J", "Blocking", "IPW-Semi-gt", "DRL-Semi"]
[bootstrap]
replicates = 20
"#;

#[test]
fn count_traj_prints_counts() {
    let o = afape(&["count-traj", "3", "10"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "3 16\n10 9864101\n");
}

#[test]
fn generate_simulate_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let o = afape(&["generate", "--n-rows", "4000", "--seed", "2", "--out", &p("d.csv"), "--full-out", &p("full.csv")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = afape(&["simulate", "--data", &p("d.csv"), "--policy", "random-10", "--out", &p("t.csv"), "--classifier-out", &p("clf.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = afape(&["simulate", "--data", &p("d.csv"), "--policy", "random:0.1", "--out", &p("t2.csv"), "--classifier", &p("clf.json")]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(p("t.csv")).unwrap(), fs::read(p("t2.csv")).unwrap());
    let o = afape(&[
        "estimate", "--data", &p("d.csv"), "--trajectories", &p("t.csv"), "--mechanism", "mar",
        "--estimators", "Blocking,IPW-Semi-gt,IPW-Semi", "--bootstrap", "20", "--out", &p("r.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = fs::read_to_string(p("r.csv")).unwrap();
    assert!(reports.starts_with("estimator,target,point,ci_low,ci_high,n_rows,n_traj,ess,mean_weight,floored,forced_stop_frac"));
    assert_eq!(reports.lines().count(), 4);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let c = cfg.to_string_lossy();
    let out = dir.path().join("o").to_string_lossy().into_owned();
    assert_eq!(code(&afape(&["experiment", &c, "--out", &out, "--set", "estimators.list=[\"Nope\"]"])), 2);
    assert_eq!(code(&afape(&["experiment", &c, "--out", &out, "--set", "mechanism.preset=mnar"])), 2);
    assert_eq!(code(&afape(&["experiment", &c, "--out", &out, "--set", "unknown_key=1"])), 2);
    assert_eq!(code(&afape(&["experiment", &c])), 2, "no output directory");
    assert_eq!(code(&afape(&["oracle", "--corrupt-q", "--corrupt-propensity"])), 2);
    assert_eq!(code(&afape(&["simulate", "--data", "x.csv", "--policy", "greedy", "--out", "t.csv"])), 1);
    assert_eq!(code(&afape(&["count-traj"])), 2);
}

#[test]
fn oracle_exit_codes() {
    assert_eq!(code(&afape(&["oracle"])), 0);
    assert_eq!(code(&afape(&["oracle", "--corrupt-propensity"])), 0);
    let o = afape(&["oracle", "--n-rows", "200"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("FAIL"));
}

fn tree(root: &Path) -> Vec<(String, String)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let name = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((name, fs::read_to_string(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (d, threads) in [(&a, "1"), (&b, "4")] {
        let o = afape(&["experiment", &cfg.to_string_lossy(), "--out", &d.to_string_lossy(), "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["config.toml", "convergence.csv", "diagnostics.json", "random-50/estimates.csv"]);
    assert_eq!(ta, tb);

    // The written config reproduces the run.
    let c = dir.path().join("c2");
    let o = afape(&["experiment", &a.join("config.toml").to_string_lossy(), "--out", &c.to_string_lossy()]);
    assert_eq!(code(&o), 0);
    assert_eq!(tree(&c), ta);
}
