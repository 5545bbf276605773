pub mod analyze;
pub mod evaluate;
pub mod ingest;
pub mod meta;
pub mod predict;
pub mod report;
pub mod score;

use std::path::{Path, PathBuf};

use vulnscore::cvss::BaseVector;
use vulnscore::gateway::PredictionTable;
use vulnscore::ingest::{load_dataset, CveEntry};

use crate::config::AppConfig;
use crate::failure::{input_error, Classify, CmdResult};

pub fn load_entries(cfg: &AppConfig, path: Option<PathBuf>) -> CmdResult<Vec<CveEntry>> {
    let path = path.unwrap_or_else(|| cfg.dataset_path());
    load_dataset(&path).input(format!("cannot load dataset {}", path.display()))
}

pub fn load_predictions(cfg: &AppConfig, path: Option<PathBuf>) -> CmdResult<PredictionTable> {
    let path = path.unwrap_or_else(|| cfg.predictions_path());
    PredictionTable::read_csv(&path).input(format!("cannot load predictions {}", path.display()))
}

/// Per model, predictions in dataset order.
pub fn aligned(
    table: &PredictionTable,
    entries: &[CveEntry],
) -> CmdResult<Vec<(String, Vec<BaseVector>)>> {
    if entries.is_empty() {
        return Err(input_error("dataset is empty"));
    }
    table
        .aligned(entries)
        .input("predictions do not match the dataset")
}

pub fn out_file(cfg: &AppConfig, name: &str) -> CmdResult<PathBuf> {
    Ok(crate::output::ensure_dir(&cfg.out_dir)?.join(name))
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
