use std::sync::OnceLock;

use regex::Regex;

use super::PredictionSet;
use crate::cvss::{BaseVector, MetricKind, MetricValue};

/// Maps a free-text field to a level of `kind`; anything unrecognised is UNKNOWN.
///
/// Accepts single-letter codes and full level names, case-insensitively,
/// with surrounding whitespace and punctuation ignored.
pub fn normalize_label(field: &str, kind: MetricKind) -> MetricValue {
    let cleaned = field
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_uppercase()
        .replace(['_', '-'], " ");
    let word = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");

    use MetricKind::*;
    use MetricValue::*;
    let value = match (kind, word.as_str()) {
        (AttackVector, "N" | "NETWORK") => N,
        (AttackVector, "A" | "ADJACENT" | "ADJACENT NETWORK") => A,
        (AttackVector, "L" | "LOCAL") => L,
        (AttackVector, "P" | "PHYSICAL") => P,
        (AttackComplexity, "L" | "LOW") => L,
        (AttackComplexity, "H" | "HIGH") => H,
        (PrivilegesRequired, "N" | "NONE") => N,
        (PrivilegesRequired, "L" | "LOW") => L,
        (PrivilegesRequired, "H" | "HIGH") => H,
        (UserInteraction, "N" | "NONE") => N,
        (UserInteraction, "R" | "REQUIRED") => R,
        (Scope, "U" | "UNCHANGED") => U,
        (Scope, "C" | "CHANGED") => C,
        (Confidentiality | Integrity | Availability, "H" | "HIGH") => H,
        (Confidentiality | Integrity | Availability, "L" | "LOW") => L,
        (Confidentiality | Integrity | Availability, "N" | "NONE") => N,
        _ => Unknown,
    };
    value
}

fn numbering() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\[\d+\]|\d+[.):])\s*").unwrap())
}

fn parse_line(line: &str) -> Option<BaseVector> {
    let line = numbering().replace(line, "");
    let mut fields: Vec<&str> = line.split('|').map(str::trim).collect();
    // Markdown table rows: "| a | b |"
    if fields.first() == Some(&"") {
        fields.remove(0);
    }
    if fields.last() == Some(&"") {
        fields.pop();
    }
    if fields.len() != MetricKind::ALL.len() {
        return None;
    }
    let mut values = [MetricValue::Unknown; 8];
    for (slot, (kind, field)) in values.iter_mut().zip(MetricKind::ALL.iter().zip(fields)) {
        *slot = normalize_label(field, *kind);
    }
    Some(BaseVector::new(values).expect("normalize_label only yields levels of its kind"))
}

/// Aligns the i-th non-empty response line with the i-th id. Never fails:
/// missing or malformed lines become all-UNKNOWN predictions.
pub fn parse_response(raw: &str, batch: &[String], model_id: &str) -> Vec<PredictionSet> {
    let mut lines = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"));
    batch
        .iter()
        .map(|id| match lines.next().and_then(parse_line) {
            Some(labels) => PredictionSet::new(id, model_id, labels),
            None => PredictionSet::unknown(id, model_id),
        })
        .collect()
}
