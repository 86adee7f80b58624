use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AfapeError, Result};
use crate::par;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 200,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over `n_units` resampled with replacement.
///
/// `estimate` receives per-unit multiplicities and must not refit anything.
/// Replicate `b` draws from the stream `(seed, b)`, so the interval does not
/// depend on thread scheduling.
pub fn bootstrap_ci<F>(n_units: usize, cfg: &BootstrapConfig, estimate: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if cfg.replicates < 2 {
        return Err(AfapeError::invalid("bootstrap needs at least 2 replicates"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(AfapeError::invalid("bootstrap level must lie in (0, 1)"));
    }
    if n_units == 0 {
        return Err(AfapeError::Empty("bootstrap units"));
    }
    let mut values: Vec<f64> = par::map_indexed(cfg.replicates, |b| {
        let mut r = rng::stream(&[tag::BOOTSTRAP, cfg.seed, b as u64]);
        let mut counts = vec![0.0; n_units];
        for _ in 0..n_units {
            counts[r.random_range(0..n_units)] += 1.0;
        }
        estimate(&counts)
    })
    .into_iter()
    .filter(|v| v.is_finite())
    .collect();
    if values.len() < 2 {
        return Err(AfapeError::invalid("too few finite bootstrap replicates"));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.level) / 2.0;
    Ok((quantile(&values, alpha), quantile(&values, 1.0 - alpha)))
}
