use std::sync::Arc;

use super::mask::SuperMask;
use super::schema::SuperfeatureSchema;
use crate::error::{AfapeError, Result};

/// Observed values of one row. `None` marks a value that was not acquired.
pub type RowValues = Vec<Option<f64>>;

/// Ground-truth data: every counterfactual feature value `X_(1)` and the label.
#[derive(Debug, Clone)]
pub struct FullDataset {
    schema: Arc<SuperfeatureSchema>,
    features: Vec<f64>,
    labels: Vec<u32>,
    n_classes: u32,
}

impl FullDataset {
    /// `features` is row-major with `schema.n_raw()` columns.
    pub fn new(schema: Arc<SuperfeatureSchema>, features: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        let d = schema.n_raw();
        if features.len() != labels.len() * d {
            return Err(AfapeError::Data(format!(
                "{} feature values for {} rows of {d} columns",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(AfapeError::Data(format!("non-finite value at row {}", i / d)));
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(FullDataset {
            schema,
            features,
            labels,
            n_classes,
        })
    }

    pub fn schema(&self) -> &Arc<SuperfeatureSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.schema.n_raw();
        &self.features[r * d..(r + 1) * d]
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.features[r * self.schema.n_raw() + c]
    }

    pub fn label(&self, r: usize) -> u32 {
        self.labels[r]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn subset(&self, rows: &[usize]) -> FullDataset {
        let d = self.schema.n_raw();
        let mut features = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        FullDataset {
            schema: self.schema.clone(),
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Views the ground truth as a retrospective dataset without missingness.
    pub fn as_observed(&self) -> ObservedDataset {
        let all = self.schema.all();
        ObservedDataset {
            schema: self.schema.clone(),
            values: self.features.clone(),
            masks: vec![all; self.n_rows()],
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            mnar_columns: Vec::new(),
        }
    }
}

/// Retrospective data: observed values, superfeature-level missingness
/// indicators `R` and labels.
///
/// Unobserved values are never stored as a magic number. The mask is the
/// only source of truth and accessors return `None` for unobserved entries.
#[derive(Debug, Clone)]
pub struct ObservedDataset {
    schema: Arc<SuperfeatureSchema>,
    values: Vec<f64>,
    masks: Vec<SuperMask>,
    labels: Vec<u32>,
    n_classes: u32,
    mnar_columns: Vec<usize>,
}

impl ObservedDataset {
    /// Builds a dataset from per-cell options, deriving the mask.
    ///
    /// A superfeature must be observed in all of its columns or in none.
    pub fn from_cells(schema: Arc<SuperfeatureSchema>, cells: Vec<RowValues>, labels: Vec<u32>) -> Result<Self> {
        if cells.len() != labels.len() {
            return Err(AfapeError::Data("row count differs between features and labels".into()));
        }
        let d = schema.n_raw();
        let mut values = Vec::with_capacity(cells.len() * d);
        let mut masks = Vec::with_capacity(cells.len());
        for (r, row) in cells.iter().enumerate() {
            if row.len() != d {
                return Err(AfapeError::Data(format!("row {r} has {} columns, expected {d}", row.len())));
            }
            let mut mask = SuperMask::EMPTY;
            for (j, sf) in schema.superfeatures().iter().enumerate() {
                let seen = sf.columns.iter().filter(|&&c| row[c].is_some()).count();
                if seen == sf.columns.len() {
                    mask.insert(j);
                } else if seen != 0 {
                    return Err(AfapeError::PartialObservation {
                        row: r,
                        superfeature: sf.name.clone(),
                    });
                }
            }
            for v in row {
                match v {
                    Some(x) if !x.is_finite() => {
                        return Err(AfapeError::Data(format!("non-finite value in row {r}")));
                    }
                    _ => values.push(v.unwrap_or(0.0)),
                }
            }
            masks.push(mask);
        }
        Self::from_parts(schema, values, masks, labels)
    }

    /// Builds a dataset from dense values and explicit masks. Values in
    /// unobserved columns are ignored.
    pub fn from_parts(
        schema: Arc<SuperfeatureSchema>,
        mut values: Vec<f64>,
        masks: Vec<SuperMask>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        let d = schema.n_raw();
        if values.len() != masks.len() * d || masks.len() != labels.len() {
            return Err(AfapeError::Data("inconsistent dataset dimensions".into()));
        }
        let all = schema.all();
        let free = schema.free();
        for (r, m) in masks.iter().enumerate() {
            if !all.is_superset_of(*m) {
                return Err(AfapeError::Data(format!("row {r}: mask references unknown superfeatures")));
            }
            if !m.is_superset_of(free) {
                return Err(AfapeError::Data(format!("row {r}: a free superfeature is missing")));
            }
            for c in 0..d {
                let v = &mut values[r * d + c];
                if m.contains(schema.owner(c)) {
                    if !v.is_finite() {
                        return Err(AfapeError::Data(format!("non-finite value in row {r}")));
                    }
                } else {
                    *v = 0.0;
                }
            }
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(ObservedDataset {
            schema,
            values,
            masks,
            labels,
            n_classes,
            mnar_columns: Vec::new(),
        })
    }

    pub(crate) fn with_mnar_columns(mut self, cols: Vec<usize>) -> Self {
        self.mnar_columns = cols;
        self
    }

    pub fn schema(&self) -> &Arc<SuperfeatureSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn mask(&self, r: usize) -> SuperMask {
        self.masks[r]
    }

    pub fn masks(&self) -> &[SuperMask] {
        &self.masks
    }

    pub fn label(&self, r: usize) -> u32 {
        self.labels[r]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn value(&self, r: usize, c: usize) -> Option<f64> {
        if self.masks[r].contains(self.schema.owner(c)) {
            Some(self.values[r * self.schema.n_raw() + c])
        } else {
            None
        }
    }

    pub fn row(&self, r: usize) -> RowValues {
        (0..self.schema.n_raw()).map(|c| self.value(r, c)).collect()
    }

    pub fn is_complete(&self, r: usize) -> bool {
        self.masks[r] == self.schema.all()
    }

    pub fn complete_fraction(&self) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        (0..self.n_rows()).filter(|&r| self.is_complete(r)).count() as f64 / self.n_rows() as f64
    }

    /// Raw columns whose missingness depends on values that can themselves
    /// be missing (set by the missingness simulator).
    pub fn mnar_columns(&self) -> &[usize] {
        &self.mnar_columns
    }

    pub fn is_flagged_mnar(&self) -> bool {
        !self.mnar_columns.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> ObservedDataset {
        let d = self.schema.n_raw();
        let mut values = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            values.extend_from_slice(&self.values[r * d..(r + 1) * d]);
        }
        ObservedDataset {
            schema: self.schema.clone(),
            values,
            masks: rows.iter().map(|&r| self.masks[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
            mnar_columns: self.mnar_columns.clone(),
        }
    }

    /// Mean of each raw column over the rows where it is observed
    /// (0 for columns never observed).
    pub fn observed_means(&self) -> Vec<f64> {
        let d = self.schema.n_raw();
        let mut sum = vec![0.0; d];
        let mut cnt = vec![0usize; d];
        for r in 0..self.n_rows() {
            for (c, (s, k)) in sum.iter_mut().zip(cnt.iter_mut()).enumerate() {
                if let Some(v) = self.value(r, c) {
                    *s += v;
                    *k += 1;
                }
            }
        }
        sum.iter().zip(&cnt).map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 }).collect()
    }

    /// Replaces every unobserved value with `fill[c]` and marks all
    /// superfeatures observed.
    pub fn impute(&self, fill: &[f64]) -> FullDataset {
        let d = self.schema.n_raw();
        let mut features = Vec::with_capacity(self.n_rows() * d);
        for r in 0..self.n_rows() {
            for (c, f) in fill.iter().enumerate().take(d) {
                features.push(self.value(r, c).unwrap_or(*f));
            }
        }
        FullDataset {
            schema: self.schema.clone(),
            features,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }

    /// Rows with every superfeature observed.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.is_complete(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<SuperfeatureSchema> {
        Arc::new(SuperfeatureSchema::synthetic_default())
    }

    #[test]
    fn unobserved_cells_read_as_none() {
        let s = schema();
        let d = ObservedDataset::from_cells(
            s,
            vec![
                vec![Some(1.0), None, Some(2.0), Some(3.0)],
                vec![Some(0.5), Some(1.5), None, None],
            ],
            vec![0, 1],
        )
        .unwrap();
        assert_eq!(d.mask(0), SuperMask::from_indices([0, 2]));
        assert_eq!(d.value(0, 1), None);
        assert_eq!(d.value(1, 1), Some(1.5));
        assert_eq!(d.row(1), vec![Some(0.5), Some(1.5), None, None]);
        assert_eq!(d.complete_fraction(), 0.0);
    }

    #[test]
    fn partial_superfeature_is_rejected() {
        let err = ObservedDataset::from_cells(schema(), vec![vec![Some(1.0), None, Some(2.0), None]], vec![0])
            .unwrap_err();
        match err {
            AfapeError::PartialObservation { row, superfeature } => {
                assert_eq!(row, 0);
                assert_eq!(superfeature, "superX2");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn free_superfeature_must_be_observed() {
        let err = ObservedDataset::from_cells(schema(), vec![vec![None, Some(1.0), Some(2.0), Some(3.0)]], vec![0]);
        assert!(err.is_err());
    }

    #[test]
    fn impute_fills_only_missing() {
        let d = ObservedDataset::from_cells(schema(), vec![vec![Some(1.0), None, Some(2.0), Some(3.0)]], vec![1]).unwrap();
        let full = d.impute(&[9.0, 8.0, 7.0, 6.0]);
        assert_eq!(full.row(0), &[1.0, 8.0, 2.0, 3.0]);
    }
}
