use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Cell-mean regressor keyed by the exact bit pattern of the input vector.
///
/// Appropriate only when inputs take finitely many values. Unseen cells fall
/// back to the overall weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    cells: Vec<(Vec<u64>, f64)>,
    #[serde(skip)]
    index: HashMap<Vec<u64>, usize>,
    fallback: f64,
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 land in the same cell.
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl TabularModel {
    pub fn fit(x: &[f64], p: usize, y: &[f64], weights: Option<&[f64]>) -> Self {
        let mut acc: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        let (mut sy, mut sw) = (0.0, 0.0);
        for (i, yi) in y.iter().enumerate() {
            let wi = weights.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            let e = acc.entry(key(&x[i * p..(i + 1) * p])).or_insert((0.0, 0.0));
            e.0 += wi * yi;
            e.1 += wi;
            sy += wi * yi;
            sw += wi;
        }
        let mut cells: Vec<(Vec<u64>, f64)> = acc.into_iter().map(|(k, (s, w))| (k, s / w)).collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        let mut m = TabularModel {
            cells,
            index: HashMap::new(),
            fallback: if sw > 0.0 { sy / sw } else { 0.0 },
        };
        m.rebuild_index();
        m
    }

    fn rebuild_index(&mut self) {
        self.index = self.cells.iter().enumerate().map(|(i, (k, _))| (k.clone(), i)).collect();
    }

    /// Restores the lookup table after deserialization.
    pub fn restore(mut self) -> Self {
        self.rebuild_index();
        self
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let k = key(x);
        if let Some(&i) = self.index.get(&k) {
            return self.cells[i].1;
        }
        // Deserialized models without a rebuilt index still answer correctly.
        match self.cells.binary_search_by(|c| c.0.cmp(&k)) {
            Ok(i) => self.cells[i].1,
            Err(_) => self.fallback,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}
