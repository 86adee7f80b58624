use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FullDataset, ObservedDataset, SuperMask, SuperfeatureSchema};
use crate::error::{AfapeError, Result};
use crate::learn::sigmoid;
use crate::par;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticTerm {
    pub column: usize,
    pub coef: f64,
}

/// Observation probability for one superfeature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MissingnessRule {
    Always,
    Constant { p: f64 },
    Logistic { intercept: f64, terms: Vec<LogisticTerm> },
}

impl MissingnessRule {
    /// `P(R_j = 1 | x)` for a fully observed raw row.
    pub fn prob(&self, x: &[f64]) -> f64 {
        match self {
            MissingnessRule::Always => 1.0,
            MissingnessRule::Constant { p } => *p,
            MissingnessRule::Logistic { intercept, terms } => {
                sigmoid(intercept + terms.iter().map(|t| t.coef * x[t.column]).sum::<f64>())
            }
        }
    }

    pub fn conditioning_columns(&self) -> Vec<usize> {
        match self {
            MissingnessRule::Logistic { terms, .. } => terms.iter().map(|t| t.column).collect(),
            _ => Vec::new(),
        }
    }
}

/// One rule per superfeature, with the superfeatures' missingness drawn
/// independently given the full feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessMechanism {
    pub rules: Vec<MissingnessRule>,
}

impl MissingnessMechanism {
    pub fn always(schema: &SuperfeatureSchema) -> Self {
        MissingnessMechanism {
            rules: vec![MissingnessRule::Always; schema.n_super()],
        }
    }

    pub fn validate(&self, schema: &SuperfeatureSchema) -> Result<()> {
        if self.rules.len() != schema.n_super() {
            return Err(AfapeError::Mechanism(format!(
                "{} rules for {} superfeatures",
                self.rules.len(),
                schema.n_super()
            )));
        }
        for (j, rule) in self.rules.iter().enumerate() {
            let name = &schema.superfeature(j).name;
            if schema.free().contains(j) && *rule != MissingnessRule::Always {
                return Err(AfapeError::Mechanism(format!("free superfeature {name} must use the always rule")));
            }
            match rule {
                MissingnessRule::Constant { p } if !(*p > 0.0 && *p <= 1.0) => {
                    return Err(AfapeError::Mechanism(format!("{name}: constant probability {p} outside (0, 1]")));
                }
                MissingnessRule::Logistic { intercept, terms } => {
                    if !intercept.is_finite() || terms.iter().any(|t| !t.coef.is_finite()) {
                        return Err(AfapeError::Mechanism(format!("{name}: non-finite coefficient")));
                    }
                    if let Some(t) = terms.iter().find(|t| t.column >= schema.n_raw()) {
                        return Err(AfapeError::Mechanism(format!("{name}: unknown column {}", t.column)));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Superfeatures that are always observed under this mechanism.
    pub fn always_observed(&self) -> SuperMask {
        SuperMask::from_indices(
            self.rules
                .iter()
                .enumerate()
                .filter(|(_, r)| **r == MissingnessRule::Always)
                .map(|(j, _)| j),
        )
    }

    /// Conditioning columns whose own superfeature can be missing. Non-empty
    /// means the mechanism is missing-not-at-random.
    pub fn mnar_columns(&self, schema: &SuperfeatureSchema) -> Vec<usize> {
        let always = self.always_observed();
        let mut cols: Vec<usize> = self
            .rules
            .iter()
            .flat_map(|r| r.conditioning_columns())
            .filter(|&c| !always.contains(schema.owner(c)))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn is_mar(&self, schema: &SuperfeatureSchema) -> bool {
        self.mnar_columns(schema).is_empty()
    }

    /// `P(R = mask | x)`.
    pub fn pattern_prob(&self, x: &[f64], mask: SuperMask) -> f64 {
        self.rules
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let p = r.prob(x);
                if mask.contains(j) { p } else { 1.0 - p }
            })
            .product()
    }

    fn sample_mask(&self, x: &[f64], rng: &mut impl Rng) -> SuperMask {
        let mut m = SuperMask::EMPTY;
        for (j, rule) in self.rules.iter().enumerate() {
            let p = rule.prob(x);
            if p >= 1.0 || rng.random::<f64>() < p {
                m.insert(j);
            }
        }
        m
    }
}

/// Draws a missingness mask for every row. Row `r` uses a random stream keyed
/// by `(seed, r)`.
pub fn apply_missingness(full: &FullDataset, mech: &MissingnessMechanism, seed: u64) -> Result<ObservedDataset> {
    let keys: Vec<u64> = (0..full.n_rows() as u64).collect();
    apply_missingness_keyed(full, mech, seed, &keys)
}

/// Like [`apply_missingness`] with caller-chosen per-row stream keys.
pub fn apply_missingness_keyed(
    full: &FullDataset,
    mech: &MissingnessMechanism,
    seed: u64,
    keys: &[u64],
) -> Result<ObservedDataset> {
    let schema = full.schema();
    mech.validate(schema)?;
    if keys.len() != full.n_rows() {
        return Err(AfapeError::invalid("one key per row is required"));
    }
    let masks = par::map_indexed(full.n_rows(), |r| {
        let mut rng = rng::stream(&[tag::MASK, seed, keys[r]]);
        mech.sample_mask(full.row(r), &mut rng)
    });
    let obs = ObservedDataset::from_parts(schema.clone(), full.features().to_vec(), masks, full.labels().to_vec())?;
    Ok(obs.with_mnar_columns(mech.mnar_columns(schema)))
}
