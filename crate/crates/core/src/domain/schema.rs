use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mask::{SuperMask, MAX_SUPERFEATURES};
use crate::error::{AfapeError, Result};

/// A group of raw columns that is acquired (or missing) as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superfeature {
    pub name: String,
    pub columns: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaRepr {
    column_names: Vec<String>,
    superfeatures: Vec<Superfeature>,
}

/// Superfeature grouping of the raw columns and their acquisition costs.
///
/// The raw columns are partitioned by the superfeatures. Superfeatures with
/// cost zero form the free set: they are revealed before the first
/// acquisition decision and are never actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct SuperfeatureSchema {
    column_names: Vec<String>,
    superfeatures: Vec<Superfeature>,
    owner: Vec<usize>,
    free: SuperMask,
}

impl TryFrom<SchemaRepr> for SuperfeatureSchema {
    type Error = AfapeError;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        SuperfeatureSchema::new(r.column_names, r.superfeatures)
    }
}

impl From<SuperfeatureSchema> for SchemaRepr {
    fn from(s: SuperfeatureSchema) -> Self {
        SchemaRepr {
            column_names: s.column_names,
            superfeatures: s.superfeatures,
        }
    }
}

impl SuperfeatureSchema {
    pub fn new(column_names: Vec<String>, superfeatures: Vec<Superfeature>) -> Result<Self> {
        let d_raw = column_names.len();
        if superfeatures.is_empty() {
            return Err(AfapeError::Schema("no superfeatures".into()));
        }
        if superfeatures.len() > MAX_SUPERFEATURES {
            return Err(AfapeError::Schema(format!(
                "{} superfeatures exceed the limit of {MAX_SUPERFEATURES}",
                superfeatures.len()
            )));
        }
        let mut owner = vec![usize::MAX; d_raw];
        let mut free = SuperMask::EMPTY;
        for (j, sf) in superfeatures.iter().enumerate() {
            if sf.columns.is_empty() {
                return Err(AfapeError::Schema(format!("superfeature `{}` has no columns", sf.name)));
            }
            if !(sf.cost.is_finite() && sf.cost >= 0.0) {
                return Err(AfapeError::Schema(format!(
                    "superfeature `{}` has invalid cost {}",
                    sf.name, sf.cost
                )));
            }
            if sf.cost == 0.0 {
                free.insert(j);
            }
            for &c in &sf.columns {
                if c >= d_raw {
                    return Err(AfapeError::Schema(format!(
                        "superfeature `{}` references column {c} but only {d_raw} columns exist",
                        sf.name
                    )));
                }
                if owner[c] != usize::MAX {
                    return Err(AfapeError::Schema(format!(
                        "column `{}` belongs to two superfeatures",
                        column_names[c]
                    )));
                }
                owner[c] = j;
            }
        }
        if let Some(c) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(AfapeError::Schema(format!(
                "column `{}` is not assigned to any superfeature",
                column_names[c]
            )));
        }
        let mut names: Vec<&str> = superfeatures.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(AfapeError::Schema("duplicate superfeature names".into()));
        }
        Ok(SuperfeatureSchema {
            column_names,
            superfeatures,
            owner,
            free,
        })
    }

    /// One superfeature per raw column, named after the column.
    pub fn singletons(column_names: Vec<String>, costs: &[f64]) -> Result<Self> {
        if costs.len() != column_names.len() {
            return Err(AfapeError::Schema("one cost per column required".into()));
        }
        let sfs = column_names
            .iter()
            .zip(costs)
            .enumerate()
            .map(|(i, (n, &cost))| Superfeature {
                name: n.clone(),
                columns: vec![i],
                cost,
            })
            .collect();
        Self::new(column_names, sfs)
    }

    /// The synthetic experiment layout: `X0` free, `X1` and `[X2, X3]` at
    /// cost 1 each.
    pub fn synthetic_default() -> Self {
        let cols = (0..4).map(|i| format!("X{i}")).collect();
        Self::new(
            cols,
            vec![
                Superfeature {
                    name: "superX0".into(),
                    columns: vec![0],
                    cost: 0.0,
                },
                Superfeature {
                    name: "superX1".into(),
                    columns: vec![1],
                    cost: 1.0,
                },
                Superfeature {
                    name: "superX2".into(),
                    columns: vec![2, 3],
                    cost: 1.0,
                },
            ],
        )
        .expect("static schema is valid")
    }

    pub fn n_raw(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_super(&self) -> usize {
        self.superfeatures.len()
    }

    pub fn superfeatures(&self) -> &[Superfeature] {
        &self.superfeatures
    }

    pub fn superfeature(&self, j: usize) -> &Superfeature {
        &self.superfeatures[j]
    }

    pub fn columns_of(&self, j: usize) -> &[usize] {
        &self.superfeatures[j].columns
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn superfeature_index(&self, name: &str) -> Option<usize> {
        self.superfeatures.iter().position(|s| s.name == name)
    }

    /// Superfeature owning raw column `col`.
    pub fn owner(&self, col: usize) -> usize {
        self.owner[col]
    }

    pub fn free(&self) -> SuperMask {
        self.free
    }

    pub fn all(&self) -> SuperMask {
        SuperMask::full(self.n_super())
    }

    pub fn costly(&self) -> SuperMask {
        self.all().difference(self.free)
    }

    /// Raw columns of every superfeature in `set`, in increasing order.
    pub fn columns_of_set(&self, set: SuperMask) -> Vec<usize> {
        let mut cols: Vec<usize> = set.iter().flat_map(|j| self.columns_of(j).iter().copied()).collect();
        cols.sort_unstable();
        cols
    }

    /// Short content hash used to tie checkpoints to the schema they were
    /// fitted against.
    pub fn fingerprint(&self) -> String {
        let repr = serde_json::to_vec(&SchemaRepr::from(self.clone())).expect("schema serializes");
        let digest = Sha256::digest(&repr);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Target quantity of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostTarget {
    /// Expected misclassification cost.
    #[serde(rename = "J_mc")]
    Misclassification,
    /// Expected acquisition cost.
    #[serde(rename = "J_a")]
    Acquisition,
    /// Sum of both.
    #[serde(rename = "J_total")]
    Total,
}

impl CostTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            CostTarget::Misclassification => "J_mc",
            CostTarget::Acquisition => "J_a",
            CostTarget::Total => "J_total",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "J_mc" | "J" | "mc" => Ok(CostTarget::Misclassification),
            "J_a" | "a" | "acquisition" => Ok(CostTarget::Acquisition),
            "J_total" | "total" => Ok(CostTarget::Total),
            other => Err(AfapeError::invalid(format!("unknown cost target `{other}`"))),
        }
    }

    pub fn counts_acquisition(self) -> bool {
        matches!(self, CostTarget::Acquisition | CostTarget::Total)
    }

    pub fn counts_misclassification(self) -> bool {
        matches!(self, CostTarget::Misclassification | CostTarget::Total)
    }
}

impl std::fmt::Display for CostTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Acquisition cost per superfeature plus the misclassification cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub c_acq: Vec<f64>,
    pub c_mc: f64,
}

impl CostSpec {
    pub fn new(c_acq: Vec<f64>, c_mc: f64, schema: &SuperfeatureSchema) -> Result<Self> {
        let spec = CostSpec { c_acq, c_mc };
        spec.validate(schema)?;
        Ok(spec)
    }

    /// Uses the costs recorded in the schema.
    pub fn from_schema(schema: &SuperfeatureSchema, c_mc: f64) -> Result<Self> {
        let c_acq = schema.superfeatures().iter().map(|s| s.cost).collect();
        Self::new(c_acq, c_mc, schema)
    }

    pub fn validate(&self, schema: &SuperfeatureSchema) -> Result<()> {
        if self.c_acq.len() != schema.n_super() {
            return Err(AfapeError::Schema(format!(
                "{} acquisition costs for {} superfeatures",
                self.c_acq.len(),
                schema.n_super()
            )));
        }
        for (j, &c) in self.c_acq.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(AfapeError::Schema(format!("acquisition cost {c} is invalid")));
            }
            if (c == 0.0) != schema.free().contains(j) {
                return Err(AfapeError::Schema(format!(
                    "superfeature `{}`: zero cost must coincide with membership in the free set",
                    schema.superfeature(j).name
                )));
            }
        }
        // c_mc = 0 is allowed so degenerate "acquisition never pays" setups can be expressed.
        if !(self.c_mc.is_finite() && self.c_mc >= 0.0) {
            return Err(AfapeError::Schema(format!("misclassification cost {} is invalid", self.c_mc)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(name: &str, columns: Vec<usize>, cost: f64) -> Superfeature {
        Superfeature {
            name: name.into(),
            columns,
            cost,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_overlap_and_gaps() {
        let overlap = SuperfeatureSchema::new(names(3), vec![sf("a", vec![0, 1], 0.0), sf("b", vec![1, 2], 1.0)]);
        assert!(matches!(overlap, Err(AfapeError::Schema(_))));
        let gap = SuperfeatureSchema::new(names(3), vec![sf("a", vec![0], 0.0), sf("b", vec![2], 1.0)]);
        assert!(matches!(gap, Err(AfapeError::Schema(_))));
        let out_of_range = SuperfeatureSchema::new(names(1), vec![sf("a", vec![3], 0.0)]);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn free_set_is_zero_cost() {
        let s = SuperfeatureSchema::synthetic_default();
        assert_eq!(s.free(), SuperMask::from_indices([0]));
        assert_eq!(s.costly(), SuperMask::from_indices([1, 2]));
        assert_eq!(s.owner(3), 2);
        assert_eq!(s.columns_of_set(SuperMask::from_indices([0, 2])), vec![0, 2, 3]);
    }

    #[test]
    fn cost_spec_must_match_free_set() {
        let s = SuperfeatureSchema::synthetic_default();
        assert!(CostSpec::new(vec![0.0, 1.0, 1.0], 14.0, &s).is_ok());
        assert!(CostSpec::new(vec![0.0, 0.0, 1.0], 14.0, &s).is_err());
        assert!(CostSpec::new(vec![1.0, 1.0, 1.0], 14.0, &s).is_err());
        assert!(CostSpec::new(vec![0.0, 1.0], 14.0, &s).is_err());
    }

    #[test]
    fn schema_json_round_trip_validates() {
        let s = SuperfeatureSchema::synthetic_default();
        let json = serde_json::to_string(&s).unwrap();
        let back: SuperfeatureSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());
        let broken = json.replace("[2,3]", "[2]");
        assert!(serde_json::from_str::<SuperfeatureSchema>(&broken).is_err());
    }
}
