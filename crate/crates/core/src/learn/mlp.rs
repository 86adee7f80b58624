use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AfapeError, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![16, 16],
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 128,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn init(n_in: usize, n_out: usize, rng: &mut StreamRng) -> Self {
        let scale = (2.0 / n_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, scale).expect("positive scale");
        Dense {
            n_in,
            n_out,
            w: (0..n_in * n_out).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            *slot = self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Fully connected ReLU network with a scalar linear output, trained by Adam
/// on weighted squared error. Inputs and targets are standardized internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Mlp {
    pub fn n_inputs(&self) -> usize {
        self.x_mean.len()
    }

    fn architecture(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.n_out).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut cur: Vec<f64> = x
            .iter()
            .zip(&self.x_mean)
            .zip(&self.x_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.n_out];
            layer.forward(&cur, &mut next);
            if li < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        cur[0] * self.y_scale + self.y_mean
    }

    /// Trains a network. With `warm`, weights of a compatible network are
    /// reused as the starting point.
    pub fn fit(
        x: &[f64],
        p: usize,
        y: &[f64],
        weights: Option<&[f64]>,
        cfg: &MlpConfig,
        rng: &mut StreamRng,
        warm: Option<&Mlp>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(AfapeError::Empty("network training data"));
        }
        if x.len() != n * p {
            return Err(AfapeError::invalid("design matrix shape mismatch"));
        }
        if cfg.batch_size == 0 {
            return Err(AfapeError::invalid("batch_size must be positive"));
        }
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let sw: f64 = (0..n).map(w).sum();
        if sw <= 0.0 {
            return Err(AfapeError::invalid("weights sum to zero"));
        }

        let mut x_mean = vec![0.0; p];
        let mut x_sq = vec![0.0; p];
        let (mut y_mean, mut y_sq) = (0.0, 0.0);
        for i in 0..n {
            let wi = w(i) / sw;
            for j in 0..p {
                let v = x[i * p + j];
                x_mean[j] += wi * v;
                x_sq[j] += wi * v * v;
            }
            y_mean += wi * y[i];
            y_sq += wi * y[i] * y[i];
        }
        let x_scale: Vec<f64> = (0..p)
            .map(|j| {
                let var = (x_sq[j] - x_mean[j] * x_mean[j]).max(0.0);
                if var > 1e-12 { var.sqrt() } else { 1.0 }
            })
            .collect();
        let y_var = (y_sq - y_mean * y_mean).max(0.0);
        let y_scale = if y_var > 1e-12 { y_var.sqrt() } else { 1.0 };

        let mut sizes = vec![p];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let compatible = warm.filter(|m| {
            m.n_inputs() == p && m.architecture() == sizes[1..].to_vec()
        });
        let layers = match compatible {
            Some(m) => m.layers.clone(),
            None => sizes.windows(2).map(|s| Dense::init(s[0], s[1], rng)).collect(),
        };
        let constant_target = y_var <= 1e-12;
        let mut net = Mlp { layers, x_mean, x_scale, y_mean, y_scale };
        if constant_target {
            let out = net.layers.last_mut().expect("at least one layer");
            out.w.iter_mut().for_each(|v| *v = 0.0);
            out.b.iter_mut().for_each(|v| *v = 0.0);
            return Ok(net);
        }

        let xs: Vec<f64> = (0..n * p)
            .map(|k| (x[k] - net.x_mean[k % p]) / net.x_scale[k % p])
            .collect();
        let ys: Vec<f64> = y.iter().map(|v| (v - net.y_mean) / net.y_scale).collect();
        // Normalized weights so the mean weight is 1.
        let ws: Vec<f64> = (0..n).map(|i| w(i) * n as f64 / sw).collect();

        let mut adam = Adam {
            m: net.layers.iter().map(|l| vec![0.0; l.w.len() + l.b.len()]).collect(),
            v: net.layers.iter().map(|l| vec![0.0; l.w.len() + l.b.len()]).collect(),
            t: 0,
        };
        let mut grads: Vec<Vec<f64>> = adam.m.iter().map(|g| vec![0.0; g.len()]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let n_layers = net.layers.len();
        let mut acts: Vec<Vec<f64>> = sizes.iter().map(|s| vec![0.0; *s]).collect();
        let mut deltas: Vec<Vec<f64>> = sizes.iter().map(|s| vec![0.0; *s]).collect();

        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(cfg.batch_size) {
                grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
                for &i in batch {
                    acts[0].copy_from_slice(&xs[i * p..(i + 1) * p]);
                    for l in 0..n_layers {
                        let (lo, hi) = acts.split_at_mut(l + 1);
                        net.layers[l].forward(&lo[l], &mut hi[0]);
                        if l + 1 < n_layers {
                            hi[0].iter_mut().for_each(|v| *v = v.max(0.0));
                        }
                    }
                    let err = acts[n_layers][0] - ys[i];
                    deltas[n_layers][0] = 2.0 * ws[i] * err / batch.len() as f64;
                    for l in (0..n_layers).rev() {
                        let layer = &net.layers[l];
                        let g = &mut grads[l];
                        let (lo, hi) = deltas.split_at_mut(l + 1);
                        let d_out = &hi[0];
                        let d_in = &mut lo[l];
                        d_in.iter_mut().for_each(|v| *v = 0.0);
                        for o in 0..layer.n_out {
                            let d = d_out[o];
                            if d == 0.0 {
                                continue;
                            }
                            let row = o * layer.n_in;
                            for k in 0..layer.n_in {
                                g[row + k] += d * acts[l][k];
                                d_in[k] += d * layer.w[row + k];
                            }
                            g[layer.w.len() + o] += d;
                        }
                        if l > 0 {
                            // ReLU derivative at the hidden layer's output.
                            for k in 0..layer.n_in {
                                if acts[l][k] <= 0.0 {
                                    d_in[k] = 0.0;
                                }
                            }
                        }
                    }
                }
                adam.t += 1;
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                let c1 = 1.0 - f64::powi(b1, adam.t);
                let c2 = 1.0 - f64::powi(b2, adam.t);
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    let nw = layer.w.len();
                    for (k, &gk) in grads[l].iter().enumerate() {
                        let mut g = gk;
                        if k < nw {
                            g += cfg.weight_decay * layer.w[k];
                        }
                        adam.m[l][k] = b1 * adam.m[l][k] + (1.0 - b1) * g;
                        adam.v[l][k] = b2 * adam.v[l][k] + (1.0 - b2) * g * g;
                        let step = cfg.learning_rate * (adam.m[l][k] / c1) / ((adam.v[l][k] / c2).sqrt() + eps);
                        if k < nw {
                            layer.w[k] -= step;
                        } else {
                            layer.b[k - nw] -= step;
                        }
                    }
                }
            }
        }
        Ok(net)
    }
}
