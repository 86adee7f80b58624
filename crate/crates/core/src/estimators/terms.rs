use super::Normalization;

/// Per-unit (per data row) contributions to an estimate.
///
/// The estimate is `sum_k mean(a[., k]) / mean(b[., k])` when
/// self-normalized and `sum_k mean(a[., k])` when raw. Each group `k`
/// collects the terms that carry the cumulative weight of decision `k`,
/// and `b[., k]` holds that weight, so that every group is normalized by
/// its own weight mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TermTable {
    groups: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    pub normalization: Normalization,
}

impl TermTable {
    pub fn zeros(n_units: usize, groups: usize, normalization: Normalization) -> Self {
        TermTable {
            groups,
            a: vec![0.0; n_units * groups],
            b: vec![0.0; n_units * groups],
            normalization,
        }
    }

    pub fn n_units(&self) -> usize {
        self.a.len() / self.groups.max(1)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn add(&mut self, unit: usize, group: usize, a: f64, b: f64) {
        let i = unit * self.groups + group;
        self.a[i] += a;
        self.b[i] += b;
    }

    /// Divides every entry of `unit` by `by` (averaging over episodes).
    pub fn scale_unit(&mut self, unit: usize, by: f64) {
        let s = unit * self.groups;
        for i in s..s + self.groups {
            self.a[i] /= by;
            self.b[i] /= by;
        }
    }

    pub fn a(&self, unit: usize, group: usize) -> f64 {
        self.a[unit * self.groups + group]
    }

    pub fn b(&self, unit: usize, group: usize) -> f64 {
        self.b[unit * self.groups + group]
    }

    /// Estimate over all units.
    pub fn estimate(&self) -> f64 {
        self.combine(self.n_units(), None)
    }

    /// Estimate over the first `n` units.
    pub fn estimate_prefix(&self, n: usize) -> f64 {
        self.combine(n.min(self.n_units()), None)
    }

    /// Estimate with per-unit weights (e.g. bootstrap counts).
    pub fn estimate_weighted(&self, weights: &[f64]) -> f64 {
        self.combine(weights.len().min(self.n_units()), Some(weights))
    }

    /// Delta-method standard error of [`estimate`](Self::estimate), from
    /// the per-unit influence `sum_k (a_k - theta_k b_k) / mean(b_k)`.
    pub fn standard_error(&self) -> f64 {
        let n = self.n_units();
        let g = self.groups;
        if n < 2 {
            return f64::NAN;
        }
        let mut mean_a = vec![0.0; g];
        let mut mean_b = vec![0.0; g];
        for u in 0..n {
            for k in 0..g {
                mean_a[k] += self.a[u * g + k] / n as f64;
                mean_b[k] += self.b[u * g + k] / n as f64;
            }
        }
        let influence = |u: usize| -> f64 {
            (0..g)
                .map(|k| {
                    let a = self.a[u * g + k];
                    match self.normalization {
                        Normalization::Raw => a,
                        Normalization::SelfNormalized if mean_b[k] != 0.0 => {
                            (a - mean_a[k] / mean_b[k] * self.b[u * g + k]) / mean_b[k]
                        }
                        Normalization::SelfNormalized => 0.0,
                    }
                })
                .sum()
        };
        let values: Vec<f64> = (0..n).map(influence).collect();
        let m = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    fn combine(&self, n: usize, weights: Option<&[f64]>) -> f64 {
        let g = self.groups;
        let mut sa = vec![0.0; g];
        let mut sb = vec![0.0; g];
        let mut sw = 0.0;
        for u in 0..n {
            let w = weights.map_or(1.0, |w| w[u]);
            if w == 0.0 {
                continue;
            }
            sw += w;
            for k in 0..g {
                sa[k] += w * self.a[u * g + k];
                sb[k] += w * self.b[u * g + k];
            }
        }
        if sw == 0.0 {
            return f64::NAN;
        }
        match self.normalization {
            Normalization::Raw => sa.iter().sum::<f64>() / sw,
            Normalization::SelfNormalized => sa
                .iter()
                .zip(&sb)
                .map(|(a, b)| {
                    if *b != 0.0 {
                        a / b
                    } else if *a == 0.0 {
                        0.0
                    } else {
                        f64::NAN
                    }
                })
                .sum(),
        }
    }
}
