use serde::{Deserialize, Serialize};

use crate::datagen::{MissingnessMechanism, MissingnessRule};
use crate::domain::{ObservedDataset, SuperMask, SuperfeatureSchema};
use crate::error::{AfapeError, Result};
use crate::learn::LogisticModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    Learned,
    GroundTruth,
}

/// Model of `P(R_j = 1 | conditioning values)` for one superfeature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensityFactor {
    /// Always observed.
    One,
    /// A known mechanism rule.
    Rule { rule: MissingnessRule },
    /// A fitted logistic model over the listed raw columns.
    Logistic { model: LogisticModel, columns: Vec<usize> },
}

impl PropensityFactor {
    fn columns(&self) -> Vec<usize> {
        match self {
            PropensityFactor::One => Vec::new(),
            PropensityFactor::Rule { rule } => rule.conditioning_columns(),
            PropensityFactor::Logistic { columns, .. } => columns.clone(),
        }
    }
}

/// How to damage a propensity model for robustness experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// Slopes set to zero, intercepts kept.
    ZeroSlopes,
    /// Slopes and intercepts set to zero (every factor becomes 0.5).
    ZeroAll,
}

/// Factorized missingness model: mask bits are independent given the
/// conditioning values, so `P(R >= r' | x) = prod_{j in r'} P(R_j = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub factors: Vec<PropensityFactor>,
    pub source: PropensitySource,
}

impl PropensityModel {
    /// Exact factors of a known mechanism.
    pub fn ground_truth(mech: &MissingnessMechanism) -> Self {
        PropensityModel {
            factors: mech
                .rules
                .iter()
                .map(|r| match r {
                    MissingnessRule::Always => PropensityFactor::One,
                    other => PropensityFactor::Rule { rule: other.clone() },
                })
                .collect(),
            source: PropensitySource::GroundTruth,
        }
    }

    /// Every factor identically one.
    pub fn unit(schema: &SuperfeatureSchema) -> Self {
        PropensityModel {
            factors: vec![PropensityFactor::One; schema.n_super()],
            source: PropensitySource::GroundTruth,
        }
    }

    pub fn n_super(&self) -> usize {
        self.factors.len()
    }

    /// `P(R_j = 1 | row)`. Fails with [`AfapeError::Inevaluable`] when a
    /// conditioning value is unobserved in `row`.
    pub fn factor(&self, j: usize, row: &[Option<f64>]) -> Result<f64> {
        let f = &self.factors[j];
        let mut x = Vec::new();
        for c in f.columns() {
            match row[c] {
                Some(v) => x.push(v),
                None => {
                    return Err(AfapeError::Inevaluable(format!(
                        "factor {j} needs raw column {c}, which is unobserved"
                    )))
                }
            }
        }
        Ok(match f {
            PropensityFactor::One => 1.0,
            PropensityFactor::Rule { rule } => {
                // Rules index full rows; scatter the gathered values back.
                let mut full = vec![0.0; row.len()];
                for (c, v) in f.columns().into_iter().zip(&x) {
                    full[c] = *v;
                }
                rule.prob(&full)
            }
            PropensityFactor::Logistic { model, .. } => model.predict_proba(&x),
        })
    }

    /// `P(R >= r' | row)`: the product of factors over `r'`.
    pub fn prob_superset(&self, r_prime: SuperMask, row: &[Option<f64>]) -> Result<f64> {
        r_prime.iter().try_fold(1.0, |acc, j| Ok(acc * self.factor(j, row)?))
    }

    /// `P(R = 1 | row)`.
    pub fn prob_complete(&self, row: &[Option<f64>]) -> Result<f64> {
        self.prob_superset(SuperMask::full(self.n_super()), row)
    }

    /// Superfeatures whose values are needed to evaluate any factor.
    pub fn requires(&self, schema: &SuperfeatureSchema) -> SuperMask {
        SuperMask::from_indices(self.factors.iter().flat_map(|f| f.columns()).map(|c| schema.owner(c)))
    }

    pub fn corrupted(&self, how: Corruption) -> Self {
        let zero_intercept = how == Corruption::ZeroAll;
        let factors = self
            .factors
            .iter()
            .map(|f| match f {
                PropensityFactor::One => PropensityFactor::One,
                PropensityFactor::Rule { rule } => PropensityFactor::Rule {
                    rule: match rule {
                        MissingnessRule::Logistic { intercept, .. } => MissingnessRule::Logistic {
                            intercept: if zero_intercept { 0.0 } else { *intercept },
                            terms: Vec::new(),
                        },
                        MissingnessRule::Constant { .. } if zero_intercept => MissingnessRule::Constant { p: 0.5 },
                        other => other.clone(),
                    },
                },
                PropensityFactor::Logistic { model, columns } => PropensityFactor::Logistic {
                    model: LogisticModel {
                        intercept: if zero_intercept { 0.0 } else { model.intercept },
                        coefs: vec![0.0; model.coefs.len()],
                    },
                    columns: columns.clone(),
                },
            })
            .collect();
        PropensityModel {
            factors,
            source: self.source,
        }
    }
}

fn always_observed(data: &ObservedDataset) -> SuperMask {
    data.masks().iter().fold(data.schema().all(), |acc, m| acc.intersection(*m))
}

fn fit_factor(data: &ObservedDataset, j: usize, rows: &[usize], columns: &[usize], l2: f64) -> Result<PropensityFactor> {
    if rows.is_empty() {
        return Err(AfapeError::Empty("propensity training rows"));
    }
    let y: Vec<bool> = rows.iter().map(|&r| data.mask(r).contains(j)).collect();
    if y.iter().all(|v| *v) {
        return Ok(PropensityFactor::One);
    }
    let mut x = Vec::with_capacity(rows.len() * columns.len());
    for &r in rows {
        for &c in columns {
            x.push(data.value(r, c).expect("conditioning columns are observed on training rows"));
        }
    }
    Ok(PropensityFactor::Logistic {
        model: LogisticModel::fit(&x, columns.len(), &y, None, l2)?,
        columns: columns.to_vec(),
    })
}

/// One logistic model per missable superfeature, each conditioned on the
/// raw columns of `conditioning`, which must be observed in every row.
pub fn fit_propensity_mar(data: &ObservedDataset, conditioning: SuperMask) -> Result<PropensityModel> {
    let schema = data.schema();
    if !always_observed(data).is_superset_of(conditioning) {
        return Err(AfapeError::Data(
            "a conditioning superfeature is missing in some rows".into(),
        ));
    }
    let columns = schema.columns_of_set(conditioning);
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let factors = (0..schema.n_super())
        .map(|j| {
            if conditioning.contains(j) || schema.free().contains(j) {
                Ok(PropensityFactor::One)
            } else {
                fit_factor(data, j, &rows, &columns, 1e-6)
            }
        })
        .collect::<Result<_>>()?;
    Ok(PropensityModel {
        factors,
        source: PropensitySource::Learned,
    })
}

/// Pattern model for missingness that depends on an adjustment set which
/// may itself be missing: factors for adjustment superfeatures condition on
/// always-observed columns; the others condition additionally on the
/// adjustment columns and are fit on rows where the adjustment set is
/// observed.
pub fn fit_propensity_mnar_pattern(data: &ObservedDataset, adjustment: SuperMask) -> Result<PropensityModel> {
    let schema = data.schema();
    let always = always_observed(data);
    let base_cols = schema.columns_of_set(always);
    let adj_cols = schema.columns_of_set(always.union(adjustment));
    let all_rows: Vec<usize> = (0..data.n_rows()).collect();
    let adj_rows: Vec<usize> = all_rows
        .iter()
        .copied()
        .filter(|&r| data.mask(r).is_superset_of(adjustment))
        .collect();
    let factors = (0..schema.n_super())
        .map(|j| {
            if always.contains(j) {
                Ok(PropensityFactor::One)
            } else if adjustment.contains(j) {
                fit_factor(data, j, &all_rows, &base_cols, 1e-6)
            } else {
                fit_factor(data, j, &adj_rows, &adj_cols, 1e-6)
            }
        })
        .collect::<Result<_>>()?;
    Ok(PropensityModel {
        factors,
        source: PropensitySource::Learned,
    })
}
