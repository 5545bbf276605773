//! CVE record ingestion: parsing CVE JSON 5 documents, quality filtering and
//! dataset persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cvss::{self, BaseVector, VECTOR_PREFIX};

pub const MIN_YEAR: i32 = 2019;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("schema mismatch at line {line}: {reason}")]
    SchemaMismatch { line: usize, reason: String },
}

fn cve_id_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap())
}

pub fn is_valid_cve_id(id: &str) -> bool {
    cve_id_pattern().is_match(id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub lang: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCveRecord {
    pub cve_id: String,
    pub descriptions: Vec<Description>,
    pub cvss31_vector: Option<String>,
    pub published_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CveEntry {
    pub cve_id: String,
    pub description: String,
    pub truth: BaseVector,
    pub published_year: i32,
}

/// Filter rules, declared in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectionReason {
    Malformed,
    Pre2019,
    NotV31,
    IncompleteMetrics,
    EmptyDescription,
    NonEnglish,
}

impl RejectionReason {
    pub const ALL: [RejectionReason; 6] = [
        RejectionReason::Malformed,
        RejectionReason::Pre2019,
        RejectionReason::NotV31,
        RejectionReason::IncompleteMetrics,
        RejectionReason::EmptyDescription,
        RejectionReason::NonEnglish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::Malformed => "malformed",
            RejectionReason::Pre2019 => "pre_2019",
            RejectionReason::NotV31 => "not_v31",
            RejectionReason::IncompleteMetrics => "incomplete_metrics",
            RejectionReason::EmptyDescription => "empty_description",
            RejectionReason::NonEnglish => "non_english",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub rejected: BTreeMap<RejectionReason, usize>,
    pub kept: usize,
}

impl FilterReport {
    pub fn count(&self, reason: RejectionReason) -> usize {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.kept + self.rejected.values().sum::<usize>()
    }

    pub fn record(&mut self, reason: RejectionReason) {
        *self.rejected.entry(reason).or_default() += 1;
    }

    /// `reason,count` rows, one per rejection reason plus `kept`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("reason,count\n");
        for reason in RejectionReason::ALL {
            out.push_str(&format!("{},{}\n", reason, self.count(reason)));
        }
        out.push_str(&format!("kept,{}\n", self.kept));
        out
    }
}

fn get_str<'a>(v: &'a Value, path: &[&str]) -> Option<&'a str> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    cur.as_str()
}

fn year_of(date: &str) -> Option<i32> {
    date.get(..4)?.parse().ok()
}

fn cvss31_from_container(container: &Value) -> Option<String> {
    container
        .get("metrics")?
        .as_array()?
        .iter()
        .find_map(|m| get_str(m, &["cvssV3_1", "vectorString"]).map(str::to_owned))
}

/// Parses a single CVE JSON 5 record.
///
/// The CNA container is preferred for descriptions and metrics; ADP
/// containers are consulted for a v3.1 vector when the CNA has none.
pub fn parse_cve_record(bytes: &[u8]) -> Result<RawCveRecord, IngestError> {
    let doc: Value = serde_json::from_slice(bytes)
        .map_err(|e| IngestError::MalformedRecord(format!("unparseable document: {e}")))?;
    parse_cve_value(&doc)
}

fn parse_cve_value(doc: &Value) -> Result<RawCveRecord, IngestError> {
    let cve_id = get_str(doc, &["cveMetadata", "cveId"])
        .ok_or_else(|| IngestError::MalformedRecord("missing cveMetadata.cveId".into()))?
        .to_owned();

    let published_year = get_str(doc, &["cveMetadata", "datePublished"])
        .or_else(|| get_str(doc, &["containers", "cna", "datePublic"]))
        .and_then(year_of);

    let cna = doc.pointer("/containers/cna");
    let descriptions = cna
        .and_then(|c| c.get("descriptions"))
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|d| Description {
                    lang: get_str(d, &["lang"]).map(str::to_owned),
                    text: get_str(d, &["value"]).unwrap_or_default().to_owned(),
                })
                .collect()
        })
        .unwrap_or_default();

    let mut cvss31_vector = cna.and_then(cvss31_from_container);
    if cvss31_vector.is_none() {
        if let Some(adp) = doc.pointer("/containers/adp").and_then(Value::as_array) {
            cvss31_vector = adp.iter().find_map(cvss31_from_container);
        }
    }

    Ok(RawCveRecord {
        cve_id,
        descriptions,
        cvss31_vector,
        published_year,
    })
}

/// Parses a file holding either one record or a JSON array of records.
pub fn parse_cve_file(bytes: &[u8]) -> Result<Vec<RawCveRecord>, IngestError> {
    let doc: Value = serde_json::from_slice(bytes)
        .map_err(|e| IngestError::MalformedRecord(format!("unparseable document: {e}")))?;
    match &doc {
        Value::Array(items) => items.iter().map(parse_cve_value).collect(),
        _ => Ok(vec![parse_cve_value(&doc)?]),
    }
}

const ENGLISH_STOPWORDS: [&str; 20] = [
    "the", "of", "and", "to", "a", "in", "that", "is", "was", "he", "for", "it", "with", "as",
    "his", "on", "be", "at", "by", "i",
];

fn is_english_tag(tag: &str) -> bool {
    let primary = tag
        .split(['-', '_'])
        .next()
        .unwrap_or("")
        .to_ascii_lowercase();
    primary == "en" || primary == "eng"
}

/// A language tag, when present, decides. Untagged text is English when at
/// least 90% of its characters are ASCII and it contains at least two
/// distinct words from a list of the twenty most frequent English words.
pub fn detect_english(text: &str, lang: Option<&str>) -> bool {
    if let Some(tag) = lang.filter(|t| !t.trim().is_empty()) {
        return is_english_tag(tag.trim());
    }
    let total = text.chars().count();
    if total == 0 {
        return false;
    }
    let ascii = text.chars().filter(char::is_ascii).count();
    if (ascii as f64) < 0.9 * total as f64 {
        return false;
    }
    let words: std::collections::HashSet<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    ENGLISH_STOPWORDS
        .iter()
        .filter(|w| words.contains(**w))
        .count()
        >= 2
}

/// Applies the filter rules in [`RejectionReason`] order; the first failure wins.
pub fn to_entry(r: &RawCveRecord) -> Result<CveEntry, RejectionReason> {
    if !is_valid_cve_id(&r.cve_id) {
        return Err(RejectionReason::Malformed);
    }
    let year = r.published_year.ok_or(RejectionReason::Malformed)?;
    if year < MIN_YEAR {
        return Err(RejectionReason::Pre2019);
    }
    let vector = r.cvss31_vector.as_deref().map(str::trim);
    let truth = match vector {
        None => return Err(RejectionReason::NotV31),
        Some(v) if !v.starts_with(VECTOR_PREFIX) => return Err(RejectionReason::NotV31),
        Some(v) => cvss::parse_vector_string(v).map_err(|_| RejectionReason::IncompleteMetrics)?,
    };

    let non_empty: Vec<&Description> = r
        .descriptions
        .iter()
        .filter(|d| !d.text.trim().is_empty())
        .collect();
    if non_empty.is_empty() {
        return Err(RejectionReason::EmptyDescription);
    }
    let english = non_empty
        .iter()
        .find(|d| detect_english(&d.text, d.lang.as_deref()))
        .ok_or(RejectionReason::NonEnglish)?;

    Ok(CveEntry {
        cve_id: r.cve_id.clone(),
        description: english.text.trim().to_owned(),
        truth,
        published_year: year,
    })
}

/// Filters records into a dataset sorted by CVE id.
///
/// Duplicate ids keep the first accepted occurrence; later duplicates are
/// counted as malformed.
pub fn build_dataset<I>(records: I) -> (Vec<CveEntry>, FilterReport)
where
    I: IntoIterator<Item = RawCveRecord>,
{
    let mut report = FilterReport::default();
    let mut entries: BTreeMap<String, CveEntry> = BTreeMap::new();
    for record in records {
        match to_entry(&record) {
            Ok(entry) => {
                if entries.contains_key(&entry.cve_id) {
                    report.record(RejectionReason::Malformed);
                } else {
                    entries.insert(entry.cve_id.clone(), entry);
                }
            }
            Err(reason) => report.record(reason),
        }
    }
    report.kept = entries.len();
    (entries.into_values().collect(), report)
}

/// Reads every `*.json` file below `dir`, recursively. Unparseable files are
/// reported as malformed records rather than aborting the walk.
pub fn read_record_dir(dir: &Path) -> Result<(Vec<RawCveRecord>, usize), IngestError> {
    let mut files = Vec::new();
    collect_json_files(dir, &mut files)?;
    files.sort();
    let mut records = Vec::new();
    let mut malformed = 0;
    for path in files {
        let bytes = fs::read(&path).map_err(|source| IngestError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        match parse_cve_file(&bytes) {
            Ok(mut rs) => records.append(&mut rs),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                malformed += 1;
            }
        }
    }
    Ok((records, malformed))
}

fn collect_json_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<(), IngestError> {
    let io_err = |source| IngestError::IoFailure {
        path: dir.display().to_string(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            collect_json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    cve_id: String,
    description: String,
    vector: String,
    year: i32,
}

/// Writes one JSON object per line with fields `cve_id`, `description`,
/// `vector`, `year`.
pub fn save_dataset(path: &Path, entries: &[CveEntry]) -> Result<(), IngestError> {
    let io_err = |source| IngestError::IoFailure {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for e in entries {
        let line = DatasetLine {
            cve_id: e.cve_id.clone(),
            description: e.description.clone(),
            vector: e.truth.to_string(),
            year: e.published_year,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_dataset(path: &Path) -> Result<Vec<CveEntry>, IngestError> {
    let io_err = |source| IngestError::IoFailure {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mismatch = |reason: String| IngestError::SchemaMismatch {
            line: i + 1,
            reason,
        };
        let rec: DatasetLine = serde_json::from_str(&line).map_err(|e| mismatch(e.to_string()))?;
        let truth = cvss::parse_vector_string(&rec.vector).map_err(|e| mismatch(e.to_string()))?;
        if !is_valid_cve_id(&rec.cve_id) {
            return Err(mismatch(format!("bad cve id {:?}", rec.cve_id)));
        }
        entries.push(CveEntry {
            cve_id: rec.cve_id,
            description: rec.description,
            truth,
            published_year: rec.year,
        });
    }
    Ok(entries)
}
