use std::path::Path;

use vulnscore::ingest::{build_dataset, read_record_dir, save_dataset, RejectionReason};

use super::out_file;
use crate::config::AppConfig;
use crate::failure::{ensure, Classify, CmdResult};
use crate::output::write_text;

pub fn run(cfg: &AppConfig, input_dir: &Path) -> CmdResult {
    let (records, bad_files) = read_record_dir(input_dir)
        .input(format!("cannot read records from {}", input_dir.display()))?;
    let seen = records.len() + bad_files;
    let (entries, mut report) = build_dataset(records);
    for _ in 0..bad_files {
        report.record(RejectionReason::Malformed);
    }
    ensure(report.total() == seen, || {
        format!("filter report covers {} of {seen} records", report.total())
    })?;

    let dataset = out_file(cfg, "dataset.jsonl")?;
    save_dataset(&dataset, &entries).input("cannot write dataset")?;
    write_text(&out_file(cfg, "filter_report.csv")?, &report.to_csv())?;
    println!(
        "kept {} of {seen} records -> {}",
        entries.len(),
        dataset.display()
    );
    Ok(())
}
