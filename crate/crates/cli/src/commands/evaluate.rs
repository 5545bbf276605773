use std::path::PathBuf;

use vulnscore::cvss::{MetricKind, MetricValue};
use vulnscore::metrics::{evaluate, misclassification_overlap, MetricReport};

use super::{aligned, load_entries, load_predictions, out_file};
use crate::config::AppConfig;
use crate::failure::{ensure, Classify, CmdResult};
use crate::output::{num, write_csv};

pub fn run(cfg: &AppConfig, dataset: Option<PathBuf>, predictions: Option<PathBuf>) -> CmdResult {
    let entries = load_entries(cfg, dataset)?;
    let table = load_predictions(cfg, predictions)?;
    let models = aligned(&table, &entries)?;
    let n = entries.len();

    let mut metric_rows = Vec::new();
    let mut class_rows = Vec::new();
    let mut confusion_rows = Vec::new();
    let mut overlap_rows = Vec::new();
    let mut per_model: Vec<Vec<MetricReport>> = vec![Vec::new(); models.len()];

    for kind in MetricKind::ALL {
        let truth: Vec<MetricValue> = entries.iter().map(|e| e.truth.get(kind)).collect();
        let mut by_model = Vec::with_capacity(models.len());
        for (m, (model, preds)) in models.iter().enumerate() {
            let pred: Vec<MetricValue> = preds.iter().map(|p| p.get(kind)).collect();
            let r = evaluate(&truth, &pred, kind).input(format!("{model} {}", kind.abbrev()))?;
            ensure(r.confusion.total() == n as u64, || {
                format!("confusion total {} != {n}", r.confusion.total())
            })?;
            ensure((0.0..=1.0).contains(&r.accuracy), || {
                format!("accuracy {}", r.accuracy)
            })?;
            metric_rows.push(vec![
                kind.abbrev().to_string(),
                model.clone(),
                n.to_string(),
                num(r.accuracy),
                num(r.weighted_precision),
                num(r.weighted_recall),
                num(r.weighted_f1),
                num(r.mae),
                num(r.baseline),
                r.confusion.unknown_count().to_string(),
            ]);
            for c in &r.per_class {
                class_rows.push(vec![
                    kind.abbrev().to_string(),
                    model.clone(),
                    c.class.code().to_string(),
                    num(c.precision),
                    num(c.recall),
                    num(c.f1),
                    c.support.to_string(),
                ]);
            }
            for (t, p, count) in r.confusion.cells() {
                confusion_rows.push(vec![
                    kind.abbrev().to_string(),
                    model.clone(),
                    t.code().to_string(),
                    p.code().to_string(),
                    count.to_string(),
                ]);
            }
            by_model.push(pred);
            per_model[m].push(r);
        }
        let overlap = misclassification_overlap(&truth, &by_model, kind).input("overlap")?;
        let total: f64 = overlap.fractions.iter().sum();
        ensure((total - 1.0).abs() < 1e-9, || {
            format!("overlap fractions sum to {total}")
        })?;
        for (k, f) in overlap.fractions.iter().enumerate() {
            overlap_rows.push(vec![
                kind.abbrev().to_string(),
                overlap.models.to_string(),
                k.to_string(),
                num(*f),
            ]);
        }
    }

    for ((model, _), reports) in models.iter().zip(&per_model) {
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / 8.0;
        let unknown: u64 = reports.iter().map(|r| r.confusion.unknown_count()).sum();
        metric_rows.push(vec![
            "Overall".to_string(),
            model.clone(),
            n.to_string(),
            num(mean(|r| r.accuracy)),
            num(mean(|r| r.weighted_precision)),
            num(mean(|r| r.weighted_recall)),
            num(mean(|r| r.weighted_f1)),
            num(mean(|r| r.mae)),
            num(mean(|r| r.baseline)),
            unknown.to_string(),
        ]);
    }

    write_csv(
        &out_file(cfg, "metrics.csv")?,
        &[
            "metric",
            "model",
            "n",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "mae",
            "baseline",
            "unknown",
        ],
        metric_rows,
    )?;
    write_csv(
        &out_file(cfg, "per_class.csv")?,
        &[
            "metric",
            "model",
            "class",
            "precision",
            "recall",
            "f1",
            "support",
        ],
        class_rows,
    )?;
    write_csv(
        &out_file(cfg, "confusion.csv")?,
        &["metric", "model", "truth", "predicted", "count"],
        confusion_rows,
    )?;
    write_csv(
        &out_file(cfg, "overlap.csv")?,
        &["metric", "models", "k_wrong", "fraction"],
        overlap_rows,
    )?;
    println!(
        "evaluated {} model(s) on {n} entries -> {}",
        models.len(),
        cfg.out_dir.display()
    );
    Ok(())
}
