use serde::{Deserialize, Serialize};

use super::{Mlp, MlpConfig, RidgeModel, TabularModel};
use crate::error::Result;
use crate::rng::StreamRng;

/// Which regression family to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorConfig {
    Tabular,
    Ridge {
        #[serde(default = "default_lambda")]
        lambda: f64,
        /// Adds squares and pairwise products of the inputs.
        #[serde(default)]
        quadratic: bool,
    },
    Mlp(MlpConfig),
}

fn default_lambda() -> f64 {
    1e-3
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig::Mlp(MlpConfig::default())
    }
}

impl RegressorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorConfig::Tabular => "tabular",
            RegressorConfig::Ridge { .. } => "ridge",
            RegressorConfig::Mlp(_) => "mlp",
        }
    }
}

/// A fitted scalar regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Constant { value: f64 },
    Tabular(TabularModel),
    Ridge { model: RidgeModel, quadratic: bool },
    Mlp(Mlp),
}

fn expand_quadratic(x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(x);
    for i in 0..x.len() {
        for j in i..x.len() {
            out.push(x[i] * x[j]);
        }
    }
}

impl Regressor {
    pub fn fit(
        cfg: &RegressorConfig,
        x: &[f64],
        p: usize,
        y: &[f64],
        weights: Option<&[f64]>,
        rng: &mut StreamRng,
        warm: Option<&Regressor>,
    ) -> Result<Self> {
        Ok(match cfg {
            RegressorConfig::Tabular => Regressor::Tabular(TabularModel::fit(x, p, y, weights)),
            RegressorConfig::Ridge { lambda, quadratic } => {
                if *quadratic {
                    let q = p + p * (p + 1) / 2;
                    let mut buf = Vec::with_capacity(q);
                    let mut big = Vec::with_capacity(y.len() * q);
                    for row in x.chunks(p.max(1)).take(y.len()) {
                        expand_quadratic(if p == 0 { &[] } else { row }, &mut buf);
                        big.extend_from_slice(&buf);
                    }
                    Regressor::Ridge {
                        model: RidgeModel::fit(&big, q, y, weights, *lambda)?,
                        quadratic: true,
                    }
                } else {
                    Regressor::Ridge {
                        model: RidgeModel::fit(x, p, y, weights, *lambda)?,
                        quadratic: false,
                    }
                }
            }
            RegressorConfig::Mlp(mc) => {
                let warm = match warm {
                    Some(Regressor::Mlp(m)) => Some(m),
                    _ => None,
                };
                Regressor::Mlp(Mlp::fit(x, p, y, weights, mc, rng, warm)?)
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Constant { value } => *value,
            Regressor::Tabular(t) => t.predict(x),
            Regressor::Ridge { model, quadratic } => {
                if *quadratic {
                    let mut buf = Vec::new();
                    expand_quadratic(x, &mut buf);
                    model.predict(&buf)
                } else {
                    model.predict(x)
                }
            }
            Regressor::Mlp(m) => m.predict(x),
        }
    }

    /// Rebuilds derived lookup state after deserialization.
    pub fn restore(self) -> Self {
        match self {
            Regressor::Tabular(t) => Regressor::Tabular(t.restore()),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_ridge_fits_a_product() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                x.extend([a as f64, b as f64]);
                y.push(1.0 + (a * b) as f64);
            }
        }
        let cfg = RegressorConfig::Ridge { lambda: 0.0, quadratic: true };
        let mut rng = crate::rng::stream(&[1]);
        let r = Regressor::fit(&cfg, &x, 2, &y, None, &mut rng, None).unwrap();
        assert!((r.predict(&[3.0, 4.0]) - 13.0).abs() < 1e-6);
    }

    #[test]
    fn config_parses_from_toml() {
        let c: RegressorConfig = toml::from_str("kind = \"ridge\"\nlambda = 0.5").unwrap();
        assert_eq!(c, RegressorConfig::Ridge { lambda: 0.5, quadratic: false });
        let m: RegressorConfig = toml::from_str("kind = \"mlp\"\nepochs = 3").unwrap();
        match m {
            RegressorConfig::Mlp(cfg) => assert_eq!(cfg.epochs, 3),
            _ => panic!(),
        }
    }
}
