use std::fs;
use std::path::{Path, PathBuf};

use crate::failure::{Classify, CmdResult};

/// Fixed precision keeps output files byte-stable across runs.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn ensure_dir(dir: &Path) -> CmdResult<PathBuf> {
    fs::create_dir_all(dir).input(format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// Writes a CSV file from a header and rows of already-formatted fields.
pub fn write_csv<H, R>(path: &Path, header: &[H], rows: R) -> CmdResult
where
    H: AsRef<str>,
    R: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let ctx = || format!("cannot write {}", path.display());
    w.write_record(header.iter().map(AsRef::as_ref))
        .input(ctx())?;
    for row in rows {
        w.write_record(&row).input(ctx())?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error()).input(ctx())?;
    fs::write(path, bytes).input(ctx())
}

pub fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).input(format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting_and_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            &["a", "b"],
            vec![vec!["x,y".to_string(), num(1.0 / 3.0)]],
        )
        .unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "a,b\n\"x,y\",0.333333\n"
        );
    }
}
