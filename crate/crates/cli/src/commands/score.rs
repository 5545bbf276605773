use std::path::Path;

use vulnscore::cvss::{base_score, parse_vector_string, ScoreBreakdown};
use vulnscore::ingest::load_dataset;

use super::out_file;
use crate::config::AppConfig;
use crate::failure::{input_error, Classify, CmdResult};
use crate::output::write_csv;

fn one_decimal(v: f64) -> String {
    format!("{v:.1}")
}

fn row(b: &ScoreBreakdown) -> Vec<String> {
    vec![
        one_decimal(b.exploitability),
        one_decimal(b.impact),
        one_decimal(b.base_score),
        b.severity.to_string(),
    ]
}

pub fn run(cfg: &AppConfig, vectors: &[String], dataset: Option<&Path>) -> CmdResult {
    if vectors.is_empty() && dataset.is_none() {
        return Err(input_error("give one or more vector strings or --dataset"));
    }
    for text in vectors {
        let v = parse_vector_string(text).input(format!("{text:?}"))?;
        let b = base_score(&v).input(format!("{text:?}"))?;
        println!(
            "{v}\t{} {}\texploitability {}\timpact {}",
            one_decimal(b.base_score),
            b.severity,
            one_decimal(b.exploitability),
            one_decimal(b.impact)
        );
    }
    if let Some(path) = dataset {
        let entries = load_dataset(path).input(format!("cannot load {}", path.display()))?;
        let mut rows = Vec::with_capacity(entries.len());
        for e in &entries {
            let b = base_score(&e.truth).input(&e.cve_id)?;
            let mut r = vec![e.cve_id.clone(), e.truth.to_string()];
            r.extend(row(&b));
            rows.push(r);
        }
        let out = out_file(cfg, "scores.csv")?;
        write_csv(
            &out,
            &[
                "cve_id",
                "vector",
                "exploitability",
                "impact",
                "base_score",
                "severity",
            ],
            rows,
        )?;
        println!("scored {} entries -> {}", entries.len(), out.display());
    }
    Ok(())
}
