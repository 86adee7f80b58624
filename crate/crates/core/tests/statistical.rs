//! Checks against binomial tolerances and closed forms computed in the
//! tests themselves.

use std::collections::HashMap;
use std::sync::Arc;

use afape_core::datagen::{
    apply_missingness, generate_synthetic, presets, MissingnessMechanism, MissingnessRule,
};
use afape_core::domain::{
    count_trajectories, AcquisitionState, Action, CostSpec, FullDataset, SuperMask, SuperfeatureSchema,
};
use afape_core::estimators::{bootstrap_ci, BootstrapConfig};
use afape_core::learn::sigmoid;
use afape_core::nuisance::{fit_propensity_mar, fit_propensity_mnar_pattern};
use afape_core::policy::{fit_greedy_policy, GreedyConfig, MajorityClassifier, SubsetRandomPolicy};
use afape_core::rng;
use afape_core::simulate::Simulator;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const N: usize = 100_000;

fn synthetic(n: usize, seed: u64) -> FullDataset {
    generate_synthetic(Arc::new(presets::schema()), n, &presets::covariance(), seed).unwrap()
}

fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn constant_rule_mask_rate() {
    let full = synthetic(N, 4);
    let mech = MissingnessMechanism {
        rules: vec![MissingnessRule::Always, MissingnessRule::Constant { p: 0.3 }, MissingnessRule::Always],
    };
    let obs = apply_missingness(&full, &mech, 4).unwrap();
    let rate = (0..N).filter(|&r| obs.mask(r).contains(1)).count() as f64 / N as f64;
    assert!((rate - 0.3).abs() < three_sigma(0.3, N), "{rate}");
    assert!((0..N).all(|r| obs.mask(r).contains(2)));
}

/// Bins rows on `x0` and compares the observed rate of `R_j` with the
/// average of `prob(x0)` in each bin.
fn binned_calibration(xs: &[f64], observed: &[bool], prob: impl Fn(f64) -> f64, bins: usize) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    for chunk in order.chunks(xs.len() / bins) {
        let n = chunk.len();
        let expected = chunk.iter().map(|&i| prob(xs[i])).sum::<f64>() / n as f64;
        let rate = chunk.iter().filter(|&&i| observed[i]).count() as f64 / n as f64;
        assert!(
            (rate - expected).abs() < three_sigma(expected, n) + 1e-3,
            "bin rate {rate} vs {expected}"
        );
    }
}

#[test]
fn mar_mechanism_is_calibrated() {
    let full = synthetic(N, 5);
    let obs = apply_missingness(&full, &presets::mar(), 5).unwrap();
    let x0: Vec<f64> = (0..N).map(|r| full.value(r, 0)).collect();
    let r1: Vec<bool> = (0..N).map(|r| obs.mask(r).contains(1)).collect();
    let r2: Vec<bool> = (0..N).map(|r| obs.mask(r).contains(2)).collect();
    binned_calibration(&x0, &r1, |x| sigmoid(-0.3 + 0.5 * x), 10);
    binned_calibration(&x0, &r2, |x| sigmoid(-0.1 + 0.6 * x), 10);
}

#[test]
fn learned_mar_propensity_is_calibrated() {
    let full = synthetic(N, 6);
    let obs = apply_missingness(&full, &presets::mar(), 6).unwrap();
    let model = fit_propensity_mar(&obs, obs.schema().free()).unwrap();
    let x0: Vec<f64> = (0..N).map(|r| full.value(r, 0)).collect();
    for j in [1, 2] {
        let observed: Vec<bool> = (0..N).map(|r| obs.mask(r).contains(j)).collect();
        binned_calibration(&x0, &observed, |x| model.factor(j, &[Some(x), None, None, None]).unwrap(), 10);
    }
}

#[test]
fn mnar_pattern_propensity_recovers_the_rule() {
    let full = synthetic(N, 7);
    let obs = apply_missingness(&full, &presets::mnar(), 7).unwrap();
    let model = fit_propensity_mnar_pattern(&obs, presets::mnar_adjustment_set()).unwrap();
    for x1 in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let row = [Some(0.0), Some(x1), None, None];
        let p = model.factor(2, &row).unwrap();
        assert!((p - sigmoid(-1.5 + x1)).abs() < 0.02, "x1 = {x1}: {p}");
    }
    let p1 = model.factor(1, &[Some(0.0), None, None, None]).unwrap();
    assert!((p1 - 0.7).abs() < three_sigma(0.7, N) + 1e-3, "{p1}");
}

fn singleton_schema(m: usize) -> SuperfeatureSchema {
    let names = (0..=m).map(|i| format!("x{i}")).collect();
    let costs: Vec<f64> = (0..=m).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect();
    SuperfeatureSchema::singletons(names, &costs).unwrap()
}

#[test]
fn subset_random_enumeration_matches_the_set_law() {
    let m = 4;
    let schema = singleton_schema(m);
    let costs = CostSpec::from_schema(&schema, 1.0).unwrap();
    let clf = MajorityClassifier { label: 0 };
    let source: Vec<Option<f64>> = (0..=m).map(|i| Some(i as f64)).collect();
    for p in [0.1, 0.5, 0.9] {
        let pol = SubsetRandomPolicy::new(p);
        let sim = Simulator::new(&schema, &pol, &clf, &costs);
        let episodes = sim.enumerate_episodes(0, &source, schema.all(), 0);
        assert_eq!(episodes.len() as u128, count_trajectories(m as u64).unwrap());
        let mut by_set: HashMap<SuperMask, f64> = HashMap::new();
        for (prob, t) in &episodes {
            *by_set.entry(t.acquired()).or_default() += prob;
        }
        for (set, prob) in by_set {
            let k = set.count() as i32;
            let expected = p.powi(k) * (1.0 - p).powi(m as i32 - k);
            assert!((prob - expected).abs() < 1e-12, "p = {p}, {set:?}: {prob} vs {expected}");
        }
        // Given the set, every order is equally likely.
        let mut by_order: HashMap<SuperMask, Vec<f64>> = HashMap::new();
        for (prob, t) in &episodes {
            by_order.entry(t.acquired()).or_default().push(*prob);
        }
        for probs in by_order.values() {
            assert!(probs.iter().all(|q| (q - probs[0]).abs() < 1e-12));
        }
    }
}

#[test]
fn subset_random_marginal_acquisition_rate() {
    let full = synthetic(N, 8);
    let schema = full.schema().clone();
    let costs = CostSpec::from_schema(&schema, 14.0).unwrap();
    let clf = MajorityClassifier { label: 0 };
    for p in [0.1, 0.9] {
        let pol = SubsetRandomPolicy::new(p);
        let trajs = Simulator::new(&schema, &pol, &clf, &costs).ground_truth(&full, 1, 8).unwrap();
        for j in [1, 2] {
            let rate = trajs.iter().filter(|t| t.acquired().contains(j)).count() as f64 / N as f64;
            assert!((rate - p).abs() < three_sigma(p, N), "p = {p}, j = {j}: {rate}");
        }
    }
}

#[test]
fn percentile_bootstrap_covers_the_mean() {
    let (datasets, n) = (300, 100);
    let cfg = BootstrapConfig {
        replicates: 300,
        level: 0.95,
        seed: 11,
    };
    let mut covered = 0;
    for d in 0..datasets {
        let mut g = rng::stream(&[77, d]);
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut g)).collect();
        let (lo, hi) = bootstrap_ci(n, &cfg, |w| {
            let tw: f64 = w.iter().sum();
            xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / tw
        })
        .unwrap();
        covered += (lo <= 0.0 && 0.0 <= hi) as usize;
    }
    let rate = covered as f64 / datasets as f64;
    assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
}

#[test]
fn greedy_policy_stops_when_errors_are_free() {
    let full = synthetic(5_000, 9);
    let obs = apply_missingness(&full, &presets::mar(), 9).unwrap();
    let schema = obs.schema().clone();
    let costs = CostSpec::new(presets::costs().c_acq.clone(), 0.0, &schema).unwrap();
    let explore = SubsetRandomPolicy::new(0.5);
    let clf = MajorityClassifier { label: 0 };
    let trajs = Simulator::new(&schema, &explore, &clf, &costs).semi_offline(&obs, 1, 9).unwrap();
    let greedy = fit_greedy_policy(&trajs, &obs, &costs, &GreedyConfig::default(), 9).unwrap();
    let mut g = rng::stream(&[99]);
    for _ in 0..200 {
        let source: Vec<Option<f64>> = (0..4).map(|_| Some(g.random_range(-3.0..3.0))).collect();
        let state = AcquisitionState::initial(&schema, &source);
        assert_eq!(greedy.distribution(&schema, &state).prob(Action::Stop), 1.0);
    }
}
