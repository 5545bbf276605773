use serde::{Deserialize, Serialize};

use super::{softmax_in_place, HyperParams, Standardizer};

/// Multinomial logistic regression on standardized features.
///
/// Objective: mean cross-entropy + lambda / (2n) * ||W||^2, biases
/// unpenalized. Fitted by full-batch gradient descent with Armijo
/// backtracking until the gradient norm drops below the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub scaler: Standardizer,
    /// Row-major `k x (d + 1)`; the last column of each row is the bias.
    pub weights: Vec<f64>,
    pub n_classes: usize,
    pub iterations: usize,
}

/// Objective value and gradient at `w` (layout as in [`LogisticRegression::weights`])
/// for already-standardized rows.
pub fn loss_and_gradient(
    w: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let stride = d + 1;
    let mut grad = vec![0.0; w.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (row, &label) in x.iter().zip(y) {
        for (c, zc) in z.iter_mut().enumerate() {
            let wc = &w[c * stride..(c + 1) * stride];
            *zc = wc[d] + wc[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
        softmax_in_place(&mut z);
        loss -= z[label].max(1e-300).ln() / n;
        for (c, &p) in z.iter().enumerate() {
            let err = (p - if c == label { 1.0 } else { 0.0 }) / n;
            let g = &mut grad[c * stride..(c + 1) * stride];
            for (gj, xj) in g[..d].iter_mut().zip(row) {
                *gj += err * xj;
            }
            g[d] += err;
        }
    }
    for c in 0..k {
        for j in 0..d {
            let i = c * stride + j;
            loss += lambda / (2.0 * n) * w[i] * w[i];
            grad[i] += lambda / n * w[i];
        }
    }
    (loss, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl LogisticRegression {
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, hp: &HyperParams) -> Self {
        let scaler = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let d = xs[0].len();
        let mut w = vec![0.0; k * (d + 1)];
        let (mut loss, mut grad) = loss_and_gradient(&w, &xs, y, k, hp.lr_lambda);
        let mut step = 1.0;
        let mut iterations = 0;
        while iterations < hp.lr_max_iter && norm(&grad) >= hp.lr_tolerance {
            iterations += 1;
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            loop {
                let trial: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                let (trial_loss, trial_grad) = loss_and_gradient(&trial, &xs, y, k, hp.lr_lambda);
                if trial_loss <= loss - 0.5 * step * g2 || step < 1e-12 {
                    w = trial;
                    loss = trial_loss;
                    grad = trial_grad;
                    break;
                }
                step *= 0.5;
            }
            step = (step * 2.0).min(64.0);
        }
        LogisticRegression {
            scaler,
            weights: w,
            n_classes: k,
            iterations,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let r = self.scaler.apply(row);
        let d = r.len();
        let mut z: Vec<f64> = self
            .weights
            .chunks(d + 1)
            .map(|wc| wc[d] + wc[..d].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        softmax_in_place(&mut z);
        z
    }
}
