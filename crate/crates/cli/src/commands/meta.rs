use std::path::PathBuf;
use std::thread;

use vulnscore::cvss::{MetricKind, MetricValue};
use vulnscore::meta::{run_meta, HyperParams, MetaModelKind, MetaReport};

use super::{aligned, load_entries, load_predictions, out_file};
use crate::config::AppConfig;
use crate::failure::{ensure, Classify, CmdResult};
use crate::output::{ensure_dir, num, write_csv, write_text};

pub fn run(cfg: &AppConfig, dataset: Option<PathBuf>, predictions: Option<PathBuf>) -> CmdResult {
    let entries = load_entries(cfg, dataset)?;
    let table = load_predictions(cfg, predictions)?;
    let models = aligned(&table, &entries)?;
    let hyper = HyperParams::default();

    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = MetricKind::ALL
            .iter()
            .map(|&kind| {
                let truth: Vec<MetricValue> = entries.iter().map(|e| e.truth.get(kind)).collect();
                let preds: Vec<(String, Vec<MetricValue>)> = models
                    .iter()
                    .map(|(id, p)| (id.clone(), p.iter().map(|v| v.get(kind)).collect()))
                    .collect();
                let hyper = &hyper;
                s.spawn(move || {
                    run_meta(
                        &preds,
                        &truth,
                        kind,
                        &MetaModelKind::BUILTIN,
                        hyper,
                        cfg.seed,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("meta worker panicked"))
            .collect()
    });
    let mut reports: Vec<MetaReport> = Vec::new();
    for (kind, r) in MetricKind::ALL.iter().zip(results) {
        reports.push(r.input(format!("meta-classification for {}", kind.abbrev()))?);
    }

    let mut header: Vec<String> = vec!["metric".into(), "baseline".into()];
    header.extend(models.iter().map(|(id, _)| id.clone()));
    header.extend(
        ["best_meta", "meta_model", "change", "train_n", "test_n"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut report_rows = Vec::new();
    let mut cv_rows = Vec::new();
    let model_dir = ensure_dir(&cfg.out_dir.join("models"))?;
    for r in &reports {
        let best =
            r.cv.iter()
                .map(|c| c.mean_f1)
                .fold(f64::NEG_INFINITY, f64::max);
        let chosen = r.cv.iter().find(|c| c.selected).map(|c| c.mean_f1);
        ensure(chosen == Some(best), || {
            format!(
                "{}: selected kind does not have the best CV F1",
                r.metric.abbrev()
            )
        })?;

        let mut row = vec![r.metric.abbrev().to_string(), num(r.baseline)];
        row.extend(r.individual.iter().map(|a| num(*a)));
        row.extend([
            num(r.meta_accuracy),
            r.selected.to_string(),
            num(r.change),
            r.train_size.to_string(),
            r.test_size.to_string(),
        ]);
        report_rows.push(row);

        for c in &r.cv {
            for (fold, (acc, f1)) in c.fold_accuracy.iter().zip(&c.fold_f1).enumerate() {
                cv_rows.push(vec![
                    r.metric.abbrev().to_string(),
                    c.kind.to_string(),
                    (fold + 1).to_string(),
                    num(*acc),
                    num(*f1),
                    c.selected.to_string(),
                ]);
            }
            cv_rows.push(vec![
                r.metric.abbrev().to_string(),
                c.kind.to_string(),
                "mean".into(),
                num(c.mean_accuracy),
                num(c.mean_f1),
                c.selected.to_string(),
            ]);
        }
        write_text(
            &model_dir.join(format!("{}.json", r.metric.abbrev())),
            &r.model.to_json(),
        )?;
    }
    write_csv(&out_file(cfg, "meta_report.csv")?, &header, report_rows)?;
    write_csv(
        &out_file(cfg, "cv_results.csv")?,
        &[
            "metric",
            "kind",
            "fold",
            "accuracy",
            "weighted_f1",
            "selected",
        ],
        cv_rows,
    )?;
    println!(
        "meta-classified {} metrics over {} model(s) -> {}",
        reports.len(),
        models.len(),
        cfg.out_dir.display()
    );
    Ok(())
}
