use serde::{Deserialize, Serialize};

use super::{
    encode, split, train, HyperParams, MetaError, MetaFeatureVector, MetaModelKind,
    TrainedMetaModel,
};
use crate::cvss::{MetricKind, MetricValue};
use crate::metrics::{confusion_matrix, majority_baseline, weighted_f1};

pub const CV_FOLDS: usize = 5;
pub const TRAIN_FRACTION: f64 = 0.8;

/// Cross-validation scores of one meta-model kind on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub kind: MetaModelKind,
    pub fold_accuracy: Vec<f64>,
    pub fold_f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub selected: bool,
}

/// Held-out comparison of the selected meta-model against the individual
/// models for one metric. Accuracies are fractions in [0, 1].
#[derive(Debug, Clone)]
pub struct MetaReport {
    pub metric: MetricKind,
    pub model_ids: Vec<String>,
    /// Majority-class accuracy over the whole dataset.
    pub baseline: f64,
    /// Held-out accuracy per model, in `model_ids` order.
    pub individual: Vec<f64>,
    pub best_individual: f64,
    pub meta_accuracy: f64,
    /// `meta_accuracy - best_individual`.
    pub change: f64,
    pub selected: MetaModelKind,
    pub cv: Vec<CvResult>,
    pub model: TrainedMetaModel,
    pub train_size: usize,
    pub test_size: usize,
}

enum Fitted {
    Model(Box<TrainedMetaModel>),
    Constant(usize),
}

impl Fitted {
    fn predict(&self, row: &[f64]) -> Result<usize, MetaError> {
        match self {
            Fitted::Model(m) => Ok(m.predict(row)?.0),
            Fitted::Constant(c) => Ok(*c),
        }
    }
}

fn fit(
    kind: &MetaModelKind,
    x: &[Vec<f64>],
    y: &[usize],
    hyper: &HyperParams,
    seed: u64,
) -> Result<Fitted, MetaError> {
    match train(kind, x, y, hyper, seed) {
        Ok(m) => Ok(Fitted::Model(Box::new(m))),
        Err(MetaError::SingleClass) => Ok(Fitted::Constant(y[0])),
        Err(e) => Err(e),
    }
}

fn scores(kind: MetricKind, truth: &[usize], pred: &[usize]) -> Result<(f64, f64), MetaError> {
    let levels = kind.levels();
    let t: Vec<MetricValue> = truth.iter().map(|&i| levels[i]).collect();
    let p: Vec<MetricValue> = pred.iter().map(|&i| levels[i]).collect();
    let correct = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    let f1 = weighted_f1(&confusion_matrix(&t, &p, kind)?)?;
    Ok((correct as f64 / truth.len() as f64, f1))
}

fn pick(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

/// Trains and evaluates meta-models for one metric.
///
/// `models` holds each model's predictions aligned with `truth`. Data is
/// split 80/20 (stratified); each kind in `kinds` is scored by stratified
/// 5-fold CV on the training part; the kind with the highest mean weighted
/// F1 (earliest in `kinds` on ties) is refit on the whole training part and
/// evaluated on the held-out part.
pub fn run_meta(
    models: &[(String, Vec<MetricValue>)],
    truth: &[MetricValue],
    kind: MetricKind,
    kinds: &[MetaModelKind],
    hyper: &HyperParams,
    seed: u64,
) -> Result<MetaReport, MetaError> {
    if models.is_empty() || truth.is_empty() || kinds.is_empty() {
        return Err(MetaError::EmptyInput);
    }
    if let Some((_, p)) = models.iter().find(|(_, p)| p.len() != truth.len()) {
        return Err(MetaError::LengthMismatch(p.len(), truth.len()));
    }
    let y: Vec<usize> = truth
        .iter()
        .map(|&t| kind.class_index(t).ok_or(MetaError::InvalidTruth))
        .collect::<Result<_, _>>()?;
    let m = models.len();
    let rows: Vec<Vec<f64>> = (0..truth.len())
        .map(|i| {
            let labels: Vec<MetricValue> = models.iter().map(|(_, p)| p[i]).collect();
            encode(&labels, kind, m).map(|f| f.to_features())
        })
        .collect::<Result<_, _>>()?;
    debug_assert!(rows
        .iter()
        .all(|r| r.len() == MetaFeatureVector::feature_count(m)));

    let (train_idx, test_idx) = split::stratified_split(&y, TRAIN_FRACTION, seed)?;
    let train_x = pick(&rows, &train_idx);
    let train_y: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let folds = split::stratified_kfold(&train_y, CV_FOLDS, seed)?;

    let mut cv = Vec::with_capacity(kinds.len());
    for k in kinds {
        let mut fold_accuracy = Vec::with_capacity(CV_FOLDS);
        let mut fold_f1 = Vec::with_capacity(CV_FOLDS);
        for (f, held) in folds.iter().enumerate() {
            let fit_idx: Vec<usize> = (0..train_y.len())
                .filter(|i| held.binary_search(i).is_err())
                .collect();
            let fx = pick(&train_x, &fit_idx);
            let fy: Vec<usize> = fit_idx.iter().map(|&i| train_y[i]).collect();
            let model = fit(k, &fx, &fy, hyper, seed.wrapping_add(f as u64 + 1))?;
            let pred = held
                .iter()
                .map(|&i| model.predict(&train_x[i]))
                .collect::<Result<Vec<_>, _>>()?;
            let truth_fold: Vec<usize> = held.iter().map(|&i| train_y[i]).collect();
            let (acc, f1) = scores(kind, &truth_fold, &pred)?;
            fold_accuracy.push(acc);
            fold_f1.push(f1);
        }
        cv.push(CvResult {
            kind: k.clone(),
            mean_accuracy: fold_accuracy.iter().sum::<f64>() / CV_FOLDS as f64,
            mean_f1: fold_f1.iter().sum::<f64>() / CV_FOLDS as f64,
            fold_accuracy,
            fold_f1,
            selected: false,
        });
    }
    let mut best = 0;
    for (i, r) in cv.iter().enumerate() {
        if r.mean_f1 > cv[best].mean_f1 {
            best = i;
        }
    }
    cv[best].selected = true;
    assert!(
        cv.iter().all(|r| r.mean_f1 <= cv[best].mean_f1),
        "selected kind must have maximal mean CV F1"
    );
    let selected = cv[best].kind.clone();

    let mut model = train(&selected, &train_x, &train_y, hyper, seed)?;
    model.metric = Some(kind);
    let test_y: Vec<usize> = test_idx.iter().map(|&i| y[i]).collect();
    let meta_pred = test_idx
        .iter()
        .map(|&i| model.predict(&rows[i]).map(|p| p.0))
        .collect::<Result<Vec<_>, _>>()?;
    let (meta_accuracy, _) = scores(kind, &test_y, &meta_pred)?;

    let individual: Vec<f64> = models
        .iter()
        .map(|(_, p)| {
            let correct = test_idx.iter().filter(|&&i| p[i] == truth[i]).count();
            correct as f64 / test_idx.len() as f64
        })
        .collect();
    let best_individual = individual.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    Ok(MetaReport {
        metric: kind,
        model_ids: models.iter().map(|(id, _)| id.clone()).collect(),
        baseline: majority_baseline(truth, kind)?,
        individual,
        best_individual,
        meta_accuracy,
        change: meta_accuracy - best_individual,
        selected,
        cv,
        model,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
    })
}
