mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use common::*;
use tempfile::TempDir;
use vulnscore::cvss::{BaseVector, MetricKind, MetricValue};
use vulnscore::gateway::{PredictionSet, PredictionTable};
use vulnscore::ingest::{save_dataset, CveEntry};
use vulnscore::metrics::majority_class;

type Row = BTreeMap<String, String>;

fn read_rows(path: &Path) -> Vec<Row> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dataset(dir: &Path, n: usize) -> (Vec<CveEntry>, String) {
    let entries = synthetic_entries(n, 7);
    let path = dir.join("dataset.jsonl");
    save_dataset(&path, &entries).unwrap();
    (entries, path_str(&path).to_string())
}

#[test]
fn ingest_applies_filters() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("records");
    let valid = synthetic_entries(3, 1);
    write_record_dir(&input, &valid, false);
    fs::write(
        input.join("old.json"),
        record_json(
            "CVE-2018-1000",
            2018,
            "en",
            "A flaw in the handler of the server.",
            None,
        )
        .to_string(),
    )
    .unwrap();
    fs::write(
        input.join("es.json"),
        entry_json(&CveEntry {
            cve_id: "CVE-2022-2000".into(),
            description: "Un desbordamiento de memoria en el servidor.".into(),
            ..valid[0].clone()
        })
        .to_string()
        .replace("\"en\"", "\"es\""),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = vulnscore(&["ingest", path_str(&input), "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let report: BTreeMap<String, String> = read_rows(&out.join("filter_report.csv"))
        .into_iter()
        .map(|row| (row["reason"].clone(), row["count"].clone()))
        .collect();
    assert_eq!(report["kept"], "3");
    assert_eq!(report["pre_2019"], "1");
    assert_eq!(report["non_english"], "1");
    let lines = fs::read_to_string(out.join("dataset.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
}

#[test]
fn ingest_counts_each_rejection_once() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("records");
    write_record_dir(&input, &synthetic_entries(10, 2), true);
    let out = tmp.path().join("out");
    let r = vulnscore(&["ingest", path_str(&input), "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let rows = read_rows(&out.join("filter_report.csv"));
    let counts: Vec<(String, String)> = rows
        .into_iter()
        .map(|row| (row["reason"].clone(), row["count"].clone()))
        .collect();
    let expected = [
        ("malformed", "1"),
        ("pre_2019", "1"),
        ("not_v31", "1"),
        ("incomplete_metrics", "1"),
        ("empty_description", "1"),
        ("non_english", "1"),
        ("kept", "10"),
    ];
    assert_eq!(
        counts,
        expected
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect::<Vec<_>>()
    );
}

#[test]
fn ingest_edge_inputs() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    let r = vulnscore(&["ingest", path_str(&empty), "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read_to_string(out.join("dataset.jsonl")).unwrap(), "");

    let missing = tmp.path().join("nope");
    let r = vulnscore(&["ingest", path_str(&missing), "--out", path_str(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn score_prints_breakdown() {
    let r = vulnscore(&["score", "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("9.8 Critical"), "{text}");

    let r = vulnscore(&["score", "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H"]);
    assert_eq!(code(&r), 2);
    let r = vulnscore(&["score", "--bogus"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn live_mode_without_credential_is_a_provider_error() {
    let tmp = TempDir::new().unwrap();
    let (_, ds) = dataset(tmp.path(), 5);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(
        &cfg,
        "mode = \"live\"\n[[providers]]\nprovider_id = \"G4\"\nendpoint = \"http://127.0.0.1:9/v1\"\n\
         model_name = \"m\"\ncredential_env_var = \"VULNSCORE_TEST_UNSET_KEY\"\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = std::process::Command::new(env!("CARGO_BIN_EXE_vulnscore"))
        .args([
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&out),
            "predict",
            "--dataset",
            &ds,
        ])
        .env_remove("VULNSCORE_TEST_UNSET_KEY")
        .output()
        .unwrap();
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    assert!(stderr(&r).contains("VULNSCORE_TEST_UNSET_KEY"));
}

#[test]
fn record_then_replay() {
    let tmp = TempDir::new().unwrap();
    let (entries, ds) = dataset(tmp.path(), 45);
    let sim = Arc::new(SimulatedProvider::new(&entries));
    let endpoint = serve(sim.clone());
    let cache = tmp.path().join("cache.tsv");
    let cfg = write_config(tmp.path(), &endpoint, &cache, "");
    let cfg = path_str(&cfg);

    let out_rec = tmp.path().join("rec");
    let r = vulnscore(&[
        "--config",
        cfg,
        "--mode",
        "record",
        "--out",
        path_str(&out_rec),
        "predict",
        "--dataset",
        &ds,
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    // 45 entries in batches of 20 -> 3 prompts for each of 6 providers.
    assert_eq!(sim.calls.load(Ordering::SeqCst), 18);
    assert_eq!(fs::read_to_string(&cache).unwrap().lines().count(), 18);

    let r = vulnscore(&[
        "--config",
        cfg,
        "--mode",
        "record",
        "--out",
        path_str(&out_rec),
        "predict",
        "--dataset",
        &ds,
    ]);
    assert_eq!(code(&r), 0);
    assert_eq!(
        sim.calls.load(Ordering::SeqCst),
        18,
        "cached prompts are not re-sent"
    );

    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let r = vulnscore(&[
            "--config",
            cfg,
            "--out",
            path_str(&out),
            "predict",
            "--dataset",
            &ds,
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        outputs.push(fs::read(out.join("predictions.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(
        outputs[0],
        fs::read(out_rec.join("predictions.csv")).unwrap()
    );
    assert_eq!(sim.calls.load(Ordering::SeqCst), 18);
    let table = PredictionTable::read_csv(&tmp.path().join("a/predictions.csv")).unwrap();
    assert_eq!(table.len(), 45 * 6);
}

#[test]
fn replay_miss_lists_keys() {
    let tmp = TempDir::new().unwrap();
    let (_, ds) = dataset(tmp.path(), 5);
    let cfg = write_config(
        tmp.path(),
        "http://127.0.0.1:9/v1",
        &tmp.path().join("empty.tsv"),
        "",
    );
    let r = vulnscore(&[
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&tmp.path().join("o")),
        "predict",
        "--dataset",
        &ds,
    ]);
    assert_eq!(code(&r), 2);
    let err = stderr(&r);
    assert!(err.contains("6 prompts missing"), "{err}");
    assert!(err.contains("G4:"));
}

fn constant_rows(
    entries: &[CveEntry],
    model: &str,
    pick: impl Fn(MetricKind) -> MetricValue,
) -> Vec<PredictionSet> {
    let mut values = [MetricValue::Unknown; 8];
    for k in MetricKind::ALL {
        values[k.index()] = pick(k);
    }
    let v = BaseVector::new(values).unwrap();
    entries
        .iter()
        .map(|e| PredictionSet::new(&e.cve_id, model, v))
        .collect()
}

#[test]
fn evaluate_reference_cases() {
    let tmp = TempDir::new().unwrap();
    let (entries, ds) = dataset(tmp.path(), 50);
    let mut rows: Vec<PredictionSet> = entries
        .iter()
        .map(|e| PredictionSet::new(&e.cve_id, "perfect", e.truth))
        .collect();
    let truth_of = |k: MetricKind| entries.iter().map(|e| e.truth.get(k)).collect::<Vec<_>>();
    rows.extend(constant_rows(&entries, "majority", |k| {
        majority_class(&truth_of(k), k).unwrap().0
    }));
    let preds = tmp.path().join("predictions.csv");
    PredictionTable::new(rows)
        .unwrap()
        .write_csv(&preds)
        .unwrap();

    let out = tmp.path().join("out");
    let r = vulnscore(&[
        "--out",
        path_str(&out),
        "evaluate",
        "--dataset",
        &ds,
        "--predictions",
        path_str(&preds),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let metrics = read_rows(&out.join("metrics.csv"));
    assert_eq!(metrics.len(), 2 * 9);
    for row in &metrics {
        match row["model"].as_str() {
            "perfect" => {
                assert_eq!(row["accuracy"], "1.000000");
                assert_eq!(row["f1"], "1.000000");
                assert_eq!(row["mae"], "0.000000");
            }
            "majority" => assert_eq!(row["accuracy"], row["baseline"], "{row:?}"),
            other => panic!("unexpected model {other}"),
        }
    }
    let overlap = read_rows(&out.join("overlap.csv"));
    assert_eq!(overlap.len(), 8 * 3);
    for k in MetricKind::ALL {
        let ks: Vec<&str> = overlap
            .iter()
            .filter(|r| r["metric"] == k.abbrev())
            .map(|r| r["k_wrong"].as_str())
            .collect();
        assert_eq!(ks, ["0", "1", "2"]);
    }
    let confusion = read_rows(&out.join("confusion.csv"));
    let perfect_total: u64 = confusion
        .iter()
        .filter(|r| r["model"] == "perfect" && r["metric"] == "AV")
        .map(|r| r["count"].parse::<u64>().unwrap())
        .sum();
    assert_eq!(perfect_total, 50);
}

#[test]
fn analyze_outputs_are_consistent() {
    let tmp = TempDir::new().unwrap();
    let (entries, ds) = dataset(tmp.path(), 80);
    let preds = tmp.path().join("predictions.csv");
    simulated_table(&entries, &["G4", "L"])
        .write_csv(&preds)
        .unwrap();
    let out = tmp.path().join("out");
    let r = vulnscore(&[
        "--out",
        path_str(&out),
        "analyze",
        "--dataset",
        &ds,
        "--predictions",
        path_str(&preds),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let dist = read_rows(&out.join("distribution.csv"));
    for k in MetricKind::ALL {
        let total: u64 = dist
            .iter()
            .filter(|r| r["metric"] == k.abbrev())
            .map(|r| r["count"].parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 80);
    }
    let assoc = read_rows(&out.join("association.csv"));
    assert_eq!(assoc.len(), 8);
    for a in MetricKind::ALL {
        let row = assoc.iter().find(|r| r["metric"] == a.abbrev()).unwrap();
        for b in MetricKind::ALL {
            let col = assoc.iter().find(|r| r["metric"] == b.abbrev()).unwrap();
            assert_eq!(row[b.abbrev()], col[a.abbrev()]);
        }
        assert_eq!(row[a.abbrev()], "1.000000");
    }
    let severity: u64 = read_rows(&out.join("severity.csv"))
        .iter()
        .map(|r| r["count"].parse::<u64>().unwrap())
        .sum();
    assert_eq!(severity, 80);
    let hist = read_rows(&out.join("length_histogram.csv"));
    assert!(hist[0].contains_key("mean_correctness_G4"));
    let corr = read_rows(&out.join("correlations.csv"));
    assert!(!corr.is_empty());
}

#[test]
fn meta_is_seeded_and_checks_coverage() {
    let tmp = TempDir::new().unwrap();
    let (entries, ds) = dataset(tmp.path(), 60);
    let preds = tmp.path().join("predictions.csv");
    let table = simulated_table(&entries, &["G4", "GM", "L"]);
    table.write_csv(&preds).unwrap();

    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let r = vulnscore(&[
            "--seed",
            "5",
            "--out",
            path_str(&out),
            "meta",
            "--dataset",
            &ds,
            "--predictions",
            path_str(&preds),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        runs.push((
            fs::read(out.join("meta_report.csv")).unwrap(),
            fs::read(out.join("cv_results.csv")).unwrap(),
            fs::read(out.join("models/AV.json")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
    let report = read_rows(&tmp.path().join("a/meta_report.csv"));
    assert_eq!(report.len(), 8);
    for row in &report {
        let best: f64 = ["G4", "GM", "L"]
            .iter()
            .map(|m| row[*m].parse::<f64>().unwrap())
            .fold(f64::MIN, f64::max);
        let meta: f64 = row["best_meta"].parse().unwrap();
        let change: f64 = row["change"].parse().unwrap();
        assert!((meta - best - change).abs() < 2e-6, "{row:?}");
    }

    // Drop one model's row for one CVE.
    let partial: Vec<PredictionSet> = table
        .rows()
        .iter()
        .filter(|r| !(r.cve_id == entries[3].cve_id && r.model_id == "GM"))
        .cloned()
        .collect();
    PredictionTable::new(partial)
        .unwrap()
        .write_csv(&preds)
        .unwrap();
    let r = vulnscore(&[
        "--out",
        path_str(&tmp.path().join("c")),
        "meta",
        "--dataset",
        &ds,
        "--predictions",
        path_str(&preds),
    ]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
}

#[test]
fn report_renders_after_pipeline_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let r = vulnscore(&["--out", path_str(&out), "report"]);
    assert_eq!(code(&r), 2);

    let (entries, ds) = dataset(tmp.path(), 40);
    let preds = tmp.path().join("predictions.csv");
    simulated_table(&entries, &["G4", "DS"])
        .write_csv(&preds)
        .unwrap();
    for cmd in ["evaluate", "analyze"] {
        let r = vulnscore(&[
            "--out",
            path_str(&out),
            cmd,
            "--dataset",
            &ds,
            "--predictions",
            path_str(&preds),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let r = vulnscore(&["--out", path_str(&out), "report"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let svg = fs::read_to_string(out.join("distribution.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(fs::read_to_string(out.join("summary.md"))
        .unwrap()
        .contains("G4"));
}
