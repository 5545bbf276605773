//! Meta-classification over the predictions of several models.
//!
//! For one metric, each CVE becomes a [`MetaFeatureVector`]: every model's
//! class code, how much the models agree, the majority label and which
//! models produced a usable answer. Second-stage classifiers are trained on
//! these features to predict the true level.

mod forest;
mod logistic;
mod mlp;
mod pipeline;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvss::{MetricKind, MetricValue};
use crate::metrics::MetricsError;

pub use forest::{Node, RandomForest, Tree};
pub use logistic::{loss_and_gradient as logistic_loss_and_gradient, LogisticRegression};
pub use mlp::{init_params as mlp_init_params, loss_and_gradient as mlp_loss_and_gradient, Mlp};
pub use pipeline::{run_meta, CvResult, MetaReport, CV_FOLDS, TRAIN_FRACTION};
pub use split::{stratified_kfold, stratified_split};

/// Serialization format version of [`TrainedMetaModel`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probabilities closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("expected {expected} model predictions, got {got}")]
    WrongModelCount { expected: usize, got: usize },
    #[error("class {class} has {count} sample(s); at least {needed} required")]
    TooFewPerClass {
        class: usize,
        count: usize,
        needed: usize,
    },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("meta-model kind {0} is not implemented")]
    Unsupported(String),
    #[error("truth contains UNKNOWN")]
    InvalidTruth,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("model file: {0}")]
    Serialization(String),
}

/// Encoded predictions of M models for one CVE and one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    /// Class index per model in canonical level order; -1 for UNKNOWN.
    pub codes: Vec<i32>,
    /// Agreeing valid pairs over all C(M, 2) pairs.
    pub pairwise_consensus: f64,
    /// Majority class among valid predictions; -1 if there are none.
    pub majority: i32,
    /// Majority count divided by M.
    pub confidence: f64,
    pub valid: Vec<bool>,
}

impl MetaFeatureVector {
    /// Layout: codes, consensus, majority, confidence, validity flags.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.codes.iter().map(|&c| c as f64).collect();
        out.push(self.pairwise_consensus);
        out.push(self.majority as f64);
        out.push(self.confidence);
        out.extend(self.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }));
        out
    }

    pub fn feature_count(models: usize) -> usize {
        2 * models + 3
    }
}

pub fn encode(
    labels: &[MetricValue],
    kind: MetricKind,
    models: usize,
) -> Result<MetaFeatureVector, MetaError> {
    if labels.len() != models || models == 0 {
        return Err(MetaError::WrongModelCount {
            expected: models,
            got: labels.len(),
        });
    }
    let codes: Vec<i32> = labels
        .iter()
        .map(|&v| kind.class_index(v).map_or(-1, |i| i as i32))
        .collect();
    let mut counts = vec![0usize; kind.levels().len()];
    for &c in codes.iter().filter(|&&c| c >= 0) {
        counts[c as usize] += 1;
    }
    let mut majority = -1;
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > best {
            best = c;
            majority = i as i32;
        }
    }
    let agreeing: usize = counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
    let pairs = models * (models - 1) / 2;
    let pairwise_consensus = if pairs == 0 {
        if best > 0 {
            1.0
        } else {
            0.0
        }
    } else {
        agreeing as f64 / pairs as f64
    };
    Ok(MetaFeatureVector {
        valid: codes.iter().map(|&c| c >= 0).collect(),
        codes,
        pairwise_consensus,
        majority,
        confidence: best as f64 / models as f64,
    })
}

/// Index of the largest probability; near-ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] + TIE_EPSILON {
            best = i;
        }
    }
    best
}

/// Element-wise mean of probability vectors of equal length.
pub fn soft_vote(distributions: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = distributions.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for d in distributions {
        for (o, p) in out.iter_mut().zip(d) {
            *o += p;
        }
    }
    let n = distributions.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaModelKind {
    Voting,
    LogisticRegression,
    RandomForest,
    NeuralNetwork,
    /// Reserved for kinds without a built-in implementation (e.g. SVM,
    /// gradient boosting); training one returns [`MetaError::Unsupported`].
    Extension(String),
}

impl MetaModelKind {
    pub const BUILTIN: [MetaModelKind; 4] = [
        MetaModelKind::Voting,
        MetaModelKind::LogisticRegression,
        MetaModelKind::RandomForest,
        MetaModelKind::NeuralNetwork,
    ];

    pub fn name(&self) -> &str {
        match self {
            MetaModelKind::Voting => "Voting",
            MetaModelKind::LogisticRegression => "LogisticRegression",
            MetaModelKind::RandomForest => "RandomForest",
            MetaModelKind::NeuralNetwork => "NeuralNetwork",
            MetaModelKind::Extension(name) => name,
        }
    }
}

impl std::fmt::Display for MetaModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr_lambda: f64,
    pub lr_max_iter: usize,
    pub lr_tolerance: f64,
    pub rf_trees: usize,
    pub rf_min_leaf: usize,
    pub mlp_hidden: [usize; 2],
    pub mlp_learning_rate: f64,
    pub mlp_alpha: f64,
    pub mlp_batch_size: usize,
    pub mlp_max_epochs: usize,
    pub mlp_patience: usize,
    pub mlp_validation_fraction: f64,
    pub mlp_tolerance: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr_lambda: 1.0,
            lr_max_iter: 5000,
            lr_tolerance: 1e-6,
            rf_trees: 100,
            rf_min_leaf: 1,
            mlp_hidden: [100, 50],
            mlp_learning_rate: 1e-3,
            mlp_alpha: 1e-4,
            mlp_batch_size: 200,
            mlp_max_epochs: 200,
            mlp_patience: 10,
            mlp_validation_fraction: 0.1,
            mlp_tolerance: 1e-4,
        }
    }
}

/// Per-column mean/std scaling; constant columns are left centred only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Logistic(LogisticRegression),
    Forest(RandomForest),
    Network(Mlp),
    Voting(Vec<TrainedMetaModel>),
}

/// A fitted meta-model. Probabilities are over `classes` in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMetaModel {
    pub format_version: u32,
    pub kind: MetaModelKind,
    pub metric: Option<MetricKind>,
    /// Class indices (canonical level order) seen in training.
    pub classes: Vec<usize>,
    pub n_features: usize,
    pub seed: u64,
    pub hyperparams: HyperParams,
    pub params: ModelParams,
}

fn check_training_data(x: &[Vec<f64>], y: &[usize]) -> Result<(usize, Vec<usize>), MetaError> {
    if x.is_empty() {
        return Err(MetaError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(MetaError::LengthMismatch(x.len(), y.len()));
    }
    let d = x[0].len();
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(MetaError::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(MetaError::NonFiniteFeature { row, col });
        }
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(MetaError::SingleClass);
    }
    Ok((d, classes))
}

/// Fits `kind` on rows `x` with class labels `y`.
pub fn train(
    kind: &MetaModelKind,
    x: &[Vec<f64>],
    y: &[usize],
    hyper: &HyperParams,
    seed: u64,
) -> Result<TrainedMetaModel, MetaError> {
    let (d, classes) = check_training_data(x, y)?;
    let local: Vec<usize> = y
        .iter()
        .map(|c| classes.binary_search(c).expect("collected above"))
        .collect();
    let k = classes.len();
    let params = match kind {
        MetaModelKind::LogisticRegression => {
            ModelParams::Logistic(LogisticRegression::fit(x, &local, k, hyper))
        }
        MetaModelKind::RandomForest => {
            ModelParams::Forest(RandomForest::fit(x, &local, k, hyper, seed))
        }
        MetaModelKind::NeuralNetwork => ModelParams::Network(Mlp::fit(x, &local, k, hyper, seed)),
        MetaModelKind::Voting => {
            let members = [
                MetaModelKind::LogisticRegression,
                MetaModelKind::RandomForest,
                MetaModelKind::NeuralNetwork,
            ]
            .iter()
            .map(|m| train(m, x, y, hyper, seed))
            .collect::<Result<Vec<_>, _>>()?;
            ModelParams::Voting(members)
        }
        MetaModelKind::Extension(name) => return Err(MetaError::Unsupported(name.clone())),
    };
    Ok(TrainedMetaModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: kind.clone(),
        metric: None,
        classes,
        n_features: d,
        seed,
        hyperparams: hyper.clone(),
        params,
    })
}

impl TrainedMetaModel {
    /// Class probabilities over `self.classes`.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>, MetaError> {
        if row.len() != self.n_features {
            return Err(MetaError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Logistic(m) => m.predict_proba(row),
            ModelParams::Forest(m) => m.predict_proba(row),
            ModelParams::Network(m) => m.predict_proba(row),
            ModelParams::Voting(members) => soft_vote(
                &members
                    .iter()
                    .map(|m| m.predict_proba(row))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        })
    }

    /// Predicted class index (canonical level order) and its probabilities.
    pub fn predict(&self, row: &[f64]) -> Result<(usize, Vec<f64>), MetaError> {
        let probs = self.predict_proba(row)?;
        Ok((self.classes[argmax(&probs)], probs))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model types serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, MetaError> {
        let model: TrainedMetaModel =
            serde_json::from_str(text).map_err(|e| MetaError::Serialization(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(MetaError::Serialization(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;
    use MetricValue::*;

    #[test]
    fn unanimous() {
        let f = encode(&[N; 6], MetricKind::AttackVector, 6).unwrap();
        assert_eq!(f.pairwise_consensus, 1.0);
        assert_eq!(f.confidence, 1.0);
        assert_eq!(f.majority, 0);
        assert!(f.valid.iter().all(|&v| v));
    }

    #[test]
    fn mixed_votes() {
        // Pairs: C(3,2) N-N + C(2,2) L-L = 4 of 15.
        let f = encode(&[N, N, N, L, L, H], MetricKind::PrivilegesRequired, 6).unwrap();
        assert_eq!(f.majority, 0);
        assert_eq!(f.confidence, 0.5);
        assert!((f.pairwise_consensus - 4.0 / 15.0).abs() < 1e-15);
        assert_eq!(f.codes, vec![0, 0, 0, 1, 1, 2]);
    }

    #[test]
    fn unknown_is_excluded() {
        let f = encode(&[Unknown, L, L, L, H, H], MetricKind::Integrity, 6).unwrap();
        assert_eq!(f.codes[0], -1);
        assert!(!f.valid[0]);
        assert_eq!(f.majority, 1);
        assert_eq!(f.confidence, 0.5);
        assert_eq!(f.to_features().len(), MetaFeatureVector::feature_count(6));
    }

    #[test]
    fn majority_ties_follow_canonical_order() {
        let f = encode(&[L, L, H, H, N, N], MetricKind::Confidentiality, 6).unwrap();
        assert_eq!(f.majority, 0); // H
        let f = encode(&[Unknown; 6], MetricKind::Confidentiality, 6).unwrap();
        assert_eq!(f.majority, -1);
        assert_eq!(f.confidence, 0.0);
        assert_eq!(f.pairwise_consensus, 0.0);
    }

    #[test]
    fn wrong_model_count() {
        assert!(matches!(
            encode(&[N; 5], MetricKind::AttackVector, 6),
            Err(MetaError::WrongModelCount {
                expected: 6,
                got: 5
            })
        ));
    }

    #[test]
    fn voting_tie_goes_to_first_class() {
        let mean = soft_vote(&[vec![0.6, 0.4], vec![0.8, 0.2], vec![0.1, 0.9]]);
        assert!((mean[0] - 0.5).abs() < 1e-12 && (mean[1] - 0.5).abs() < 1e-12);
        assert_eq!(argmax(&mean), 0);
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
    }

    fn toy() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 / 10.0, ((i * 7) % 5) as f64])
            .collect();
        let y = x.iter().map(|r| usize::from(r[0] >= 2.0) * 2).collect();
        (x, y)
    }

    #[test]
    fn every_kind_learns_a_threshold() {
        let (x, y) = toy();
        for kind in MetaModelKind::BUILTIN {
            let m = train(&kind, &x, &y, &HyperParams::default(), 7).unwrap();
            assert_eq!(m.classes, vec![0, 2]);
            let correct = x
                .iter()
                .zip(&y)
                .filter(|(r, &t)| m.predict(r).unwrap().0 == t)
                .count();
            assert!(correct >= 38, "{kind}: {correct}/40");
            for r in &x {
                let p = m.predict_proba(r).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn training_errors() {
        let (x, _) = toy();
        let hp = HyperParams::default();
        let kind = MetaModelKind::LogisticRegression;
        assert!(matches!(
            train(&kind, &x, &vec![1; 40], &hp, 0),
            Err(MetaError::SingleClass)
        ));
        let mut bad = x.clone();
        bad[3][1] = f64::NAN;
        let (_, y) = toy();
        assert!(matches!(
            train(&kind, &bad, &y, &hp, 0),
            Err(MetaError::NonFiniteFeature { row: 3, col: 1 })
        ));
        assert!(matches!(
            train(&MetaModelKind::Extension("SVM".into()), &x, &y, &hp, 0),
            Err(MetaError::Unsupported(_))
        ));
        let m = train(&kind, &x, &y, &hp, 0).unwrap();
        assert!(matches!(
            m.predict(&[1.0]),
            Err(MetaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let (x, y) = toy();
        let m = train(&MetaModelKind::Voting, &x, &y, &HyperParams::default(), 3).unwrap();
        let back = TrainedMetaModel::from_json(&m.to_json()).unwrap();
        for r in &x {
            assert_eq!(m.predict(r).unwrap(), back.predict(r).unwrap());
        }
    }
}
