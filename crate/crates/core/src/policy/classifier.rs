use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AcquisitionState, ObservedDataset, SuperMask, SuperfeatureSchema};
use crate::error::{AfapeError, Result};
use crate::learn::LogisticModel;
use crate::rng::{self, tag};

/// Predicts a label from the acquired information. Implementations must
/// depend on the state only through the acquired set and its values.
pub trait Classifier: Send + Sync {
    fn predict(&self, state: &AcquisitionState) -> u32;
}

/// Always predicts one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityClassifier {
    pub label: u32,
}

impl MajorityClassifier {
    pub fn fit(labels: &[u32]) -> Result<Self> {
        let k = labels.iter().copied().max().ok_or(AfapeError::Empty("classifier training labels"))? as usize + 1;
        let mut counts = vec![0usize; k];
        for &y in labels {
            counts[y as usize] += 1;
        }
        // Ties go to the smaller label.
        let label = (0..k).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0) as u32;
        Ok(MajorityClassifier { label })
    }
}

impl Classifier for MajorityClassifier {
    fn predict(&self, _state: &AcquisitionState) -> u32 {
        self.label
    }
}

/// Mean imputation of unacquired columns, acquired bits appended, then
/// L2-regularized logistic regression (one-vs-rest for more than two classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeLogisticClassifier {
    pub means: Vec<f64>,
    pub n_super: usize,
    pub models: Vec<LogisticModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Retention probability for the re-masked copy of the training rows.
    pub subsample_prob: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            subsample_prob: 0.5,
            l2: 1.0,
        }
    }
}

impl ImputeLogisticClassifier {
    fn encode(&self, values: &[Option<f64>], acquired: SuperMask, out: &mut Vec<f64>) {
        out.clear();
        out.extend(values.iter().zip(&self.means).map(|(v, m)| v.unwrap_or(*m)));
        out.extend((0..self.n_super).map(|j| if acquired.contains(j) { 1.0 } else { 0.0 }));
    }

    fn predict_values(&self, values: &[Option<f64>], acquired: SuperMask) -> u32 {
        let mut x = Vec::with_capacity(values.len() + self.n_super);
        self.encode(values, acquired, &mut x);
        if self.models.len() == 1 {
            return (self.models[0].predict_proba(&x) >= 0.5) as u32;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (k, m) in self.models.iter().enumerate() {
            let z = m.logit(&x);
            if z > best.1 {
                best = (k, z);
            }
        }
        best.0 as u32
    }
}

impl Classifier for ImputeLogisticClassifier {
    fn predict(&self, state: &AcquisitionState) -> u32 {
        self.predict_values(state.values(), state.acquired())
    }
}

/// Trains the reference classifier on the observed rows plus a copy in
/// which every costly observed superfeature is kept with probability
/// `cfg.subsample_prob`.
pub fn fit_classifier(train: &ObservedDataset, cfg: &ClassifierConfig, seed: u64) -> Result<ImputeLogisticClassifier> {
    if train.n_rows() == 0 {
        return Err(AfapeError::Empty("classifier training data"));
    }
    let k = train.n_classes().max(1) as usize;
    let mut seen = vec![false; k];
    train.labels().iter().for_each(|&y| seen[y as usize] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(AfapeError::SingleClass);
    }
    let schema: &SuperfeatureSchema = train.schema();
    let means = train.observed_means();
    let mut clf = ImputeLogisticClassifier {
        means,
        n_super: schema.n_super(),
        models: Vec::new(),
    };
    let p = schema.n_raw() + schema.n_super();
    let mut x = Vec::with_capacity(2 * train.n_rows() * p);
    let mut labels = Vec::with_capacity(2 * train.n_rows());
    let mut buf = Vec::with_capacity(p);
    for r in 0..train.n_rows() {
        let row = train.row(r);
        clf.encode(&row, train.mask(r), &mut buf);
        x.extend_from_slice(&buf);
        labels.push(train.label(r));

        let mut rng = rng::stream(&[tag::CLASSIFIER, seed, r as u64]);
        let mut kept = schema.free();
        for j in train.mask(r).difference(schema.free()).iter() {
            if rng.random::<f64>() < cfg.subsample_prob {
                kept.insert(j);
            }
        }
        let masked: Vec<Option<f64>> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if kept.contains(schema.owner(c)) { *v } else { None })
            .collect();
        clf.encode(&masked, kept, &mut buf);
        x.extend_from_slice(&buf);
        labels.push(train.label(r));
    }
    let classes: Vec<u32> = if k == 2 { vec![1] } else { (0..k as u32).collect() };
    for c in classes {
        let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        clf.models.push(LogisticModel::fit(&x, p, &y, None, cfg.l2)?);
    }
    Ok(clf)
}

/// Serializable choice of classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyClassifier {
    Majority(MajorityClassifier),
    ImputeLogistic(ImputeLogisticClassifier),
}

impl Classifier for AnyClassifier {
    fn predict(&self, state: &AcquisitionState) -> u32 {
        match self {
            AnyClassifier::Majority(c) => c.predict(state),
            AnyClassifier::ImputeLogistic(c) => c.predict(state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FullDataset, SuperfeatureSchema};
    use std::sync::Arc;

    fn separable(n: usize, seed: u64) -> FullDataset {
        let schema = Arc::new(SuperfeatureSchema::synthetic_default());
        let mut rng = rng::stream(&[seed]);
        let mut f = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            y.push((row[0] > 0.0) as u32);
            f.extend(row);
        }
        FullDataset::new(schema, f, y).unwrap()
    }

    #[test]
    fn separable_when_free_feature_decides() {
        let train = separable(2000, 1).as_observed();
        let clf = fit_classifier(&train, &ClassifierConfig::default(), 0).unwrap();
        let test = separable(2000, 2);
        let schema = test.schema().clone();
        let correct = (0..test.n_rows())
            .filter(|&r| {
                let src: Vec<Option<f64>> = test.row(r).iter().map(|v| Some(*v)).collect();
                clf.predict(&AcquisitionState::initial(&schema, &src)) == test.label(r)
            })
            .count();
        assert!(correct as f64 / 2000.0 > 0.95);
    }

    #[test]
    fn single_class_is_rejected() {
        let full = separable(10, 3);
        let obs = FullDataset::new(full.schema().clone(), full.features().to_vec(), vec![1; 10])
            .unwrap()
            .as_observed();
        assert!(matches!(
            fit_classifier(&obs, &ClassifierConfig::default(), 0),
            Err(AfapeError::SingleClass)
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let train = separable(300, 4).as_observed();
        let a = fit_classifier(&train, &ClassifierConfig::default(), 9).unwrap();
        let b = fit_classifier(&train, &ClassifierConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn majority_breaks_ties_low() {
        assert_eq!(MajorityClassifier::fit(&[0, 1, 1, 0]).unwrap().label, 0);
        assert_eq!(MajorityClassifier::fit(&[2, 1, 1]).unwrap().label, 1);
    }
}
