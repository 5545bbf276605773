use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A CART classification tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_proba(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

/// Bagged Gini trees with `floor(sqrt(d))` candidate features per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    max_features: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut probs = vec![0.0; self.k];
        for &i in idx {
            probs[self.y[i]] += 1.0;
        }
        let n = idx.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    /// Lowest weighted child impurity over thresholds of one feature, or
    /// `None` if the feature is constant on `idx`.
    fn best_for_feature(&self, idx: &mut [usize], feature: usize) -> Option<(f64, f64)> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let n = idx.len();
        if x[idx[0]][feature] == x[idx[n - 1]][feature] {
            return None;
        }
        let mut total = vec![0usize; self.k];
        for &i in idx.iter() {
            total[self.y[i]] += 1;
        }
        let mut left = vec![0usize; self.k];
        let mut right = total;
        let mut best: Option<(f64, f64)> = None;
        for pos in 1..n {
            let moved = self.y[idx[pos - 1]];
            left[moved] += 1;
            right[moved] -= 1;
            let (lo, hi) = (x[idx[pos - 1]][feature], x[idx[pos]][feature]);
            if lo == hi || pos < self.min_leaf || n - pos < self.min_leaf {
                continue;
            }
            let score = (pos as f64 * gini(&left, pos) + (n - pos) as f64 * gini(&right, n - pos))
                / n as f64;
            if best.is_none_or(|(s, _)| score < s) {
                let mid = lo + (hi - lo) / 2.0;
                // Guard against a midpoint that rounds onto the upper value.
                let threshold = if mid < hi { mid } else { lo };
                best = Some((score, threshold));
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize]) -> usize {
        let first = self.y[idx[0]];
        if idx.len() < 2 * self.min_leaf || idx.iter().all(|&i| self.y[i] == first) {
            return self.leaf(idx);
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        let mut examined = 0;
        // Keep drawing features past max_features until a usable one is found.
        for &f in &features {
            if examined >= self.max_features && best.is_some() {
                break;
            }
            if let Some((score, threshold)) = self.best_for_feature(idx, f) {
                examined += 1;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(idx);
        };
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][split.feature].total_cmp(&x[b][split.feature]));
        let cut = idx.partition_point(|&i| x[i][split.feature] <= split.threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let (l, r) = idx.split_at_mut(cut);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, hp: &HyperParams, seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let max_features = ((d as f64).sqrt().floor() as usize).max(1);
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..hp.rf_trees)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeder.gen());
                let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    k,
                    max_features,
                    min_leaf: hp.rf_min_leaf.max(1),
                    rng,
                    nodes: Vec::new(),
                };
                b.build(&mut idx);
                Tree { nodes: b.nodes }
            })
            .collect();
        RandomForest {
            trees,
            n_classes: k,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict_proba(row)) {
                *o += p;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}
