use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, HyperParams, Standardizer};

/// Feed-forward network: ReLU hidden layers, softmax output.
///
/// All parameters live in one flat vector: for each layer, a row-major
/// `out x in` weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Standardizer,
    /// Layer widths including input and output.
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
    pub epochs: usize,
}

pub fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Activations of every layer for one input; the last is the softmax output.
fn forward(params: &[f64], layers: &[usize], row: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![row.to_vec()];
    let mut off = 0;
    let last = layers.len() - 2;
    for (l, w) in layers.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params[off..off + fan_in * fan_out];
        let bias = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let input = &acts[l];
        let mut z: Vec<f64> = (0..fan_out)
            .map(|o| {
                bias[o]
                    + weights[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        if l == last {
            softmax_in_place(&mut z);
        } else {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

/// Mean cross-entropy plus `alpha / (2n) * ||weights||^2` (biases
/// unpenalized) over the given rows, and its gradient.
pub fn loss_and_gradient(
    params: &[f64],
    layers: &[usize],
    x: &[&[f64]],
    y: &[usize],
    alpha: f64,
) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let offsets: Vec<usize> = layers
        .windows(2)
        .scan(0, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some(start)
        })
        .collect();
    for (row, &label) in x.iter().zip(y) {
        let acts = forward(params, layers, row);
        let out = acts.last().expect("at least one layer");
        loss -= out[label].max(1e-300).ln() / n;
        let mut delta: Vec<f64> = out.clone();
        delta[label] -= 1.0;
        delta.iter_mut().for_each(|v| *v /= n);
        for l in (0..layers.len() - 1).rev() {
            let (fan_in, fan_out) = (layers[l], layers[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..fan_out {
                let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (gj, a) in g.iter_mut().zip(input) {
                    *gj += delta[o] * a;
                }
                grad[off + fan_in * fan_out + o] += delta[o];
            }
            if l > 0 {
                let weights = &params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    for (l, w) in layers.windows(2).enumerate() {
        let off = offsets[l];
        for i in off..off + w[0] * w[1] {
            loss += alpha / (2.0 * n) * params[i] * params[i];
            grad[i] += alpha / n * params[i];
        }
    }
    (loss, grad)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(layers: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(param_count(layers));
    for w in layers.windows(2) {
        let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
        params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)));
        params.extend(std::iter::repeat_n(0.0, w[1]));
    }
    params
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

impl Mlp {
    /// Mini-batch Adam with early stopping on a held-out slice: training
    /// stops once validation loss has not improved by `mlp_tolerance` for
    /// `mlp_patience` epochs, and the best parameters seen are kept.
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, hp: &HyperParams, seed: u64) -> Self {
        let scaler = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let mut layers = vec![xs[0].len()];
        layers.extend_from_slice(&hp.mlp_hidden);
        layers.push(k);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = init_params(&layers, &mut rng);

        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut rng);
        let n_val = ((xs.len() as f64 * hp.mlp_validation_fraction).ceil() as usize)
            .clamp(1, xs.len().saturating_sub(1).max(1));
        let (val_idx, train_idx) = if xs.len() > 1 {
            order.split_at(n_val)
        } else {
            (&order[..], &order[..])
        };
        let val_x: Vec<&[f64]> = val_idx.iter().map(|&i| xs[i].as_slice()).collect();
        let val_y: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();
        let mut train_idx = train_idx.to_vec();

        let mut adam = Adam {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            t: 0,
        };
        let mut best_loss = f64::INFINITY;
        let mut best_params = params.clone();
        let mut stale = 0;
        let mut epochs = 0;
        let batch = hp.mlp_batch_size.max(1);
        while epochs < hp.mlp_max_epochs {
            epochs += 1;
            train_idx.shuffle(&mut rng);
            for chunk in train_idx.chunks(batch) {
                let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
                let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let (_, g) = loss_and_gradient(&params, &layers, &bx, &by, hp.mlp_alpha);
                adam.step(&mut params, &g, hp.mlp_learning_rate);
            }
            let (val_loss, _) = loss_and_gradient(&params, &layers, &val_x, &val_y, 0.0);
            if val_loss < best_loss - hp.mlp_tolerance {
                best_loss = val_loss;
                best_params.clone_from(&params);
                stale = 0;
            } else {
                stale += 1;
                if stale >= hp.mlp_patience {
                    break;
                }
            }
        }
        Mlp {
            scaler,
            layers,
            params: best_params,
            epochs,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        forward(&self.params, &self.layers, &self.scaler.apply(row))
            .pop()
            .expect("output layer")
    }
}
