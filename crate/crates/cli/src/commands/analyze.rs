use std::collections::BTreeMap;
use std::path::PathBuf;

use vulnscore::cvss::{base_score, MetricKind, MetricValue, Severity};
use vulnscore::metrics::{
    association_matrix, class_counts, imbalance_ratio_from_counts, majority_class,
};
use vulnscore::text::{
    correctness, correctness_correlates, distinct_tokens, length_stats, word_bucket, word_count,
    Feature, HeuristicEntityCounter, IcModel,
};

use super::{aligned, load_entries, load_predictions, out_file};
use crate::config::AppConfig;
use crate::failure::{ensure, input_error, Classify, CmdResult};
use crate::output::{num, write_csv};

pub fn run(cfg: &AppConfig, dataset: Option<PathBuf>, predictions: Option<PathBuf>) -> CmdResult {
    let entries = load_entries(cfg, dataset)?;
    if entries.is_empty() {
        return Err(input_error("dataset is empty"));
    }
    let n = entries.len();

    let mut dist_rows = Vec::new();
    let mut balance_rows = Vec::new();
    for kind in MetricKind::ALL {
        let truth: Vec<MetricValue> = entries.iter().map(|e| e.truth.get(kind)).collect();
        let counts = class_counts(&truth, kind).input("class counts")?;
        ensure(counts.iter().sum::<u64>() == n as u64, || {
            format!("{} distribution does not sum to {n}", kind.abbrev())
        })?;
        for (level, &c) in kind.levels().iter().zip(&counts) {
            dist_rows.push(vec![
                kind.abbrev().to_string(),
                level.code().to_string(),
                c.to_string(),
                num(c as f64 / n as f64),
            ]);
        }
        let (majority, share) = majority_class(&truth, kind).input("majority class")?;
        let present = counts.iter().copied().filter(|&c| c > 0);
        balance_rows.push(vec![
            kind.abbrev().to_string(),
            majority.code().to_string(),
            present.clone().max().unwrap_or(0).to_string(),
            present.min().unwrap_or(0).to_string(),
            imbalance_ratio_from_counts(&counts)
                .map(num)
                .unwrap_or_default(),
            num(share),
        ]);
    }
    write_csv(
        &out_file(cfg, "distribution.csv")?,
        &["metric", "class", "count", "fraction"],
        dist_rows,
    )?;
    write_csv(
        &out_file(cfg, "class_balance.csv")?,
        &[
            "metric",
            "majority",
            "majority_count",
            "minority_count",
            "imbalance_ratio",
            "baseline",
        ],
        balance_rows,
    )?;

    // Severity is recomputed from the vectors, never taken from the records.
    let mut severity: BTreeMap<Severity, usize> = Severity::ALL.iter().map(|s| (*s, 0)).collect();
    for e in &entries {
        let b = base_score(&e.truth).invariant("dataset vector failed to score")?;
        *severity.get_mut(&b.severity).expect("all bands present") += 1;
    }
    write_csv(
        &out_file(cfg, "severity.csv")?,
        &["severity", "count", "fraction"],
        Severity::ALL.iter().map(|s| {
            vec![
                s.as_str().to_string(),
                severity[s].to_string(),
                num(severity[s] as f64 / n as f64),
            ]
        }),
    )?;

    let truths: Vec<_> = entries.iter().map(|e| e.truth).collect();
    let assoc = association_matrix(&truths);
    for i in 0..8 {
        ensure(assoc[i][i] == 1.0, || {
            format!("association diagonal {i} != 1")
        })?;
        for j in 0..8 {
            ensure(assoc[i][j] == assoc[j][i], || {
                format!("association not symmetric at {i},{j}")
            })?;
        }
    }
    let mut header = vec!["metric".to_string()];
    header.extend(MetricKind::ALL.iter().map(|k| k.abbrev().to_string()));
    write_csv(
        &out_file(cfg, "association.csv")?,
        &header,
        MetricKind::ALL.iter().enumerate().map(|(i, k)| {
            let mut row = vec![k.abbrev().to_string()];
            row.extend(assoc[i].iter().map(|v| num(*v)));
            row
        }),
    )?;

    let descriptions: Vec<&str> = entries.iter().map(|e| e.description.as_str()).collect();
    let stats = length_stats(&descriptions).input("length statistics")?;
    let mean_words = descriptions.iter().map(|d| word_count(d)).sum::<usize>() as f64 / n as f64;
    write_csv(
        &out_file(cfg, "length_stats.csv")?,
        &["statistic", "value"],
        [
            ("n", n.to_string()),
            ("mean_chars", num(stats.mean)),
            ("median_chars", num(stats.median)),
            ("min_chars", stats.min.to_string()),
            ("max_chars", stats.max.to_string()),
            ("mean_words", num(mean_words)),
            ("vocabulary", distinct_tokens(&descriptions).to_string()),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v]),
    )?;

    let models = match predictions.or_else(|| {
        let p = cfg.predictions_path();
        p.exists().then_some(p)
    }) {
        Some(p) => {
            let table = load_predictions(cfg, Some(p))?;
            aligned(&table, &entries)?
        }
        None => Vec::new(),
    };

    let mut header = vec!["bucket_start_words".to_string(), "count".to_string()];
    header.extend(models.iter().map(|(m, _)| format!("mean_correctness_{m}")));
    let buckets: Vec<usize> = descriptions.iter().map(|d| word_bucket(d)).collect();
    let hist_rows = stats.word_histogram.iter().map(|&(start, count)| {
        let mut row = vec![start.to_string(), count.to_string()];
        for (_, preds) in &models {
            let scores: Vec<f64> = entries
                .iter()
                .zip(preds)
                .zip(&buckets)
                .filter(|(_, &b)| b == start)
                .map(|((e, p), _)| correctness(&e.truth, p))
                .collect();
            row.push(if scores.is_empty() {
                String::new()
            } else {
                num(scores.iter().sum::<f64>() / scores.len() as f64)
            });
        }
        row
    });
    write_csv(
        &out_file(cfg, "length_histogram.csv")?,
        &header,
        hist_rows.collect::<Vec<_>>(),
    )?;

    if !models.is_empty() {
        let ic = IcModel::build(&descriptions);
        let counter = HeuristicEntityCounter;
        let mut rows = Vec::new();
        for feature in Feature::ALL {
            let results = correctness_correlates(&entries, &models, feature, &ic, &counter)
                .input("correlation analysis")?;
            for r in results {
                let metric = r.metric.map_or("Overall", |k| k.abbrev()).to_string();
                let (rv, p, band) = match &r.result {
                    Ok(c) => (num(c.r), num(c.p_value), c.p_band().to_string()),
                    Err(e) => (String::new(), String::new(), e.to_string()),
                };
                rows.push(vec![
                    r.model,
                    metric,
                    feature.to_string(),
                    n.to_string(),
                    rv,
                    p,
                    band,
                ]);
            }
        }
        write_csv(
            &out_file(cfg, "correlations.csv")?,
            &["model", "metric", "feature", "n", "r", "p_value", "p_band"],
            rows,
        )?;
    }
    println!("analyzed {n} entries -> {}", cfg.out_dir.display());
    Ok(())
}
