//! Classification metrics for per-metric CVSS predictions.
//!
//! UNKNOWN predictions (and levels foreign to the metric) get their own
//! confusion-matrix column, never count as correct, and take the maximum
//! ordinal penalty in MAE.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cvss::{self, BaseVector, MetricKind, MetricValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} truth labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("only one class present")]
    SingleClass,
    #[error("degenerate contingency table (zero marginal)")]
    DegenerateTable,
    #[error("models do not cover the same samples")]
    CoverageMismatch,
    #[error("ground truth holds {value} which is not a level of {kind}")]
    InvalidTruth {
        kind: MetricKind,
        value: MetricValue,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub kind: MetricKind,
    /// Truth classes in canonical order; columns are these plus UNKNOWN.
    pub classes: Vec<MetricValue>,
    /// `counts[truth][pred]`, with `pred == classes.len()` the UNKNOWN column.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn unknown_column(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn unknown_count(&self) -> u64 {
        let col = self.unknown_column();
        self.counts.iter().map(|row| row[col]).sum()
    }

    /// Long-form rows `(truth, pred, count)`, including zero cells.
    pub fn cells(&self) -> Vec<(MetricValue, MetricValue, u64)> {
        let mut out = Vec::new();
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                let pred = self.classes.get(p).copied().unwrap_or(MetricValue::Unknown);
                out.push((self.classes[t], pred, count));
            }
        }
        out
    }
}

fn check_lengths(truth: usize, pred: usize) -> Result<(), MetricsError> {
    if truth != pred {
        return Err(MetricsError::LengthMismatch(truth, pred));
    }
    if truth == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

fn truth_index(kind: MetricKind, value: MetricValue) -> Result<usize, MetricsError> {
    kind.class_index(value)
        .ok_or(MetricsError::InvalidTruth { kind, value })
}

pub fn confusion_matrix(
    truth: &[MetricValue],
    pred: &[MetricValue],
    kind: MetricKind,
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(truth.len(), pred.len())?;
    let classes = kind.levels().to_vec();
    let unknown = classes.len();
    let mut counts = vec![vec![0u64; classes.len() + 1]; classes.len()];
    for (&t, &p) in truth.iter().zip(pred) {
        let row = truth_index(kind, t)?;
        let col = kind.class_index(p).unwrap_or(unknown);
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix {
        kind,
        classes,
        counts,
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let correct: u64 = (0..cm.classes.len()).map(|i| cm.counts[i][i]).sum();
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub class: MetricValue,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedScores {
    pub per_class: Vec<ClassScores>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 and their support-weighted averages.
/// Zero denominators give 0 for that class.
pub fn weighted_scores(cm: &ConfusionMatrix) -> Result<WeightedScores, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let per_class: Vec<ClassScores> = cm
        .classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let tp = cm.counts[i][i];
            let support = cm.support(i);
            let precision = ratio(tp, cm.predicted(i));
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                class,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let weigh = |f: fn(&ClassScores) -> f64| {
        per_class
            .iter()
            .map(|c| c.support as f64 * f(c))
            .sum::<f64>()
            / total as f64
    };
    Ok(WeightedScores {
        precision: weigh(|c| c.precision),
        recall: weigh(|c| c.recall),
        f1: weigh(|c| c.f1),
        per_class,
    })
}

pub fn weighted_precision(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    weighted_scores(cm).map(|s| s.precision)
}

pub fn weighted_recall(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    weighted_scores(cm).map(|s| s.recall)
}

pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    weighted_scores(cm).map(|s| s.f1)
}

/// Mean absolute difference of ordinal encodings. UNKNOWN predictions count
/// as the largest possible distance for `kind`.
pub fn ordinal_mae(
    truth: &[MetricValue],
    pred: &[MetricValue],
    kind: MetricKind,
) -> Result<f64, MetricsError> {
    check_lengths(truth.len(), pred.len())?;
    let mut sum = 0u64;
    for (&t, &p) in truth.iter().zip(pred) {
        let t_ord = cvss::ordinal_value(kind, t)
            .map_err(|_| MetricsError::InvalidTruth { kind, value: t })?;
        sum += match cvss::ordinal_value(kind, p) {
            Ok(p_ord) => t_ord.abs_diff(p_ord),
            Err(_) => kind.max_ordinal_distance(),
        } as u64;
    }
    Ok(sum as f64 / truth.len() as f64)
}

/// Class counts in canonical level order (zero counts included).
pub fn class_counts(truth: &[MetricValue], kind: MetricKind) -> Result<Vec<u64>, MetricsError> {
    let mut counts = vec![0u64; kind.levels().len()];
    for &t in truth {
        counts[truth_index(kind, t)?] += 1;
    }
    Ok(counts)
}

/// Most frequent class and its share; ties go to the earliest canonical level.
pub fn majority_class(
    truth: &[MetricValue],
    kind: MetricKind,
) -> Result<(MetricValue, f64), MetricsError> {
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let counts = class_counts(truth, kind)?;
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok((
        kind.levels()[best],
        counts[best] as f64 / truth.len() as f64,
    ))
}

pub fn majority_baseline(truth: &[MetricValue], kind: MetricKind) -> Result<f64, MetricsError> {
    majority_class(truth, kind).map(|(_, share)| share)
}

/// Majority-class count over minority-class count, among classes present.
pub fn imbalance_ratio(truth: &[MetricValue], kind: MetricKind) -> Result<f64, MetricsError> {
    let counts = class_counts(truth, kind)?;
    imbalance_ratio_from_counts(&counts)
}

pub fn imbalance_ratio_from_counts(counts: &[u64]) -> Result<f64, MetricsError> {
    let present: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.len() < 2 {
        return Err(MetricsError::SingleClass);
    }
    let max = *present.iter().max().unwrap();
    let min = *present.iter().min().unwrap();
    Ok(max as f64 / min as f64)
}

/// Cramér's V of a contingency table: sqrt(chi2 / (n * (min(r, c) - 1))).
pub fn cramers_v_table(table: &[Vec<u64>]) -> Result<f64, MetricsError> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(MetricsError::DegenerateTable);
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row_sums.iter().chain(&col_sums).any(|&s| s == 0.0) {
        return Err(MetricsError::DegenerateTable);
    }
    let n: f64 = row_sums.iter().sum();
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / n;
            chi2 += (obs as f64 - expected).powi(2) / expected;
        }
    }
    let k = rows.min(cols) as f64 - 1.0;
    Ok((chi2 / (n * k)).sqrt().clamp(0.0, 1.0))
}

/// Cramér's V between two label sequences, over the categories observed.
pub fn cramers_v<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let a_index = category_index(a);
    let b_index = category_index(b);
    let mut table = vec![vec![0u64; b_index.len()]; a_index.len()];
    for (x, y) in a.iter().zip(b) {
        table[a_index[x]][b_index[y]] += 1;
    }
    cramers_v_table(&table)
}

fn category_index<T: Ord>(labels: &[T]) -> BTreeMap<&T, usize> {
    let mut idx = BTreeMap::new();
    for l in labels {
        idx.entry(l).or_insert(0);
    }
    for (i, v) in idx.values_mut().enumerate() {
        *v = i;
    }
    idx
}

/// 8×8 Cramér's V between ground-truth metrics, indexed by
/// [`MetricKind::index`]. Pairs involving a single-class metric are 0 off
/// the diagonal; the diagonal is 1.
pub fn association_matrix(truth: &[BaseVector]) -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    let columns: Vec<Vec<MetricValue>> = MetricKind::ALL
        .iter()
        .map(|k| truth.iter().map(|v| v.get(*k)).collect())
        .collect();
    for i in 0..8 {
        m[i][i] = 1.0;
        for j in (i + 1)..8 {
            let v = cramers_v(&columns[i], &columns[j]).unwrap_or(0.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub kind: MetricKind,
    pub models: usize,
    /// `fractions[k]`: share of samples misclassified by exactly k models.
    pub fractions: Vec<f64>,
}

impl OverlapReport {
    pub fn all_wrong(&self) -> f64 {
        self.fractions[self.models]
    }
}

pub fn misclassification_overlap(
    truth: &[MetricValue],
    predictions_by_model: &[Vec<MetricValue>],
    kind: MetricKind,
) -> Result<OverlapReport, MetricsError> {
    if truth.is_empty() || predictions_by_model.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if predictions_by_model.iter().any(|p| p.len() != truth.len()) {
        return Err(MetricsError::CoverageMismatch);
    }
    let m = predictions_by_model.len();
    let mut hist = vec![0u64; m + 1];
    for (i, &t) in truth.iter().enumerate() {
        truth_index(kind, t)?;
        let wrong = predictions_by_model.iter().filter(|p| p[i] != t).count();
        hist[wrong] += 1;
    }
    Ok(OverlapReport {
        kind,
        models: m,
        fractions: hist
            .into_iter()
            .map(|c| c as f64 / truth.len() as f64)
            .collect(),
    })
}

/// Everything reported for one (metric, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub mae: f64,
    pub baseline: f64,
    #[serde(skip)]
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(
    truth: &[MetricValue],
    pred: &[MetricValue],
    kind: MetricKind,
) -> Result<MetricReport, MetricsError> {
    let confusion = confusion_matrix(truth, pred, kind)?;
    let scores = weighted_scores(&confusion)?;
    Ok(MetricReport {
        kind,
        accuracy: accuracy(&confusion)?,
        weighted_precision: scores.precision,
        weighted_recall: scores.recall,
        weighted_f1: scores.f1,
        per_class: scores.per_class,
        mae: ordinal_mae(truth, pred, kind)?,
        baseline: majority_baseline(truth, kind)?,
        confusion,
    })
}
