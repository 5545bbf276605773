//! Description-quality statistics and their correlation with prediction
//! correctness.

use std::collections::{HashMap, HashSet};
use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cvss::{BaseVector, MetricKind};
use crate::ingest::CveEntry;

pub const HISTOGRAM_BUCKET_WORDS: usize = 20;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("empty input")]
    EmptyInput,
    #[error("text has no tokens")]
    EmptyText,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance, correlation undefined")]
    ZeroVariance,
    #[error("predictions do not cover the dataset")]
    CoverageMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionStats {
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
    /// `(bucket_start_words, count)` for buckets of [`HISTOGRAM_BUCKET_WORDS`].
    pub word_histogram: Vec<(usize, usize)>,
}

pub fn char_length(text: &str) -> usize {
    text.chars().count()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn word_bucket(text: &str) -> usize {
    word_count(text) / HISTOGRAM_BUCKET_WORDS * HISTOGRAM_BUCKET_WORDS
}

pub fn length_stats<S: AsRef<str>>(descriptions: &[S]) -> Result<DescriptionStats, TextError> {
    if descriptions.is_empty() {
        return Err(TextError::EmptyInput);
    }
    let mut lengths: Vec<usize> = descriptions
        .iter()
        .map(|d| char_length(d.as_ref()))
        .collect();
    lengths.sort_unstable();
    let n = lengths.len();
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;

    let mut buckets: std::collections::BTreeMap<usize, usize> = Default::default();
    for d in descriptions {
        *buckets.entry(word_bucket(d.as_ref())).or_default() += 1;
    }
    Ok(DescriptionStats {
        mean,
        median,
        min: lengths[0],
        max: lengths[n - 1],
        word_histogram: buckets.into_iter().collect(),
    })
}

/// Counts named entities in a description. Implementations may wrap an
/// external NER engine.
pub trait EntityCounter {
    fn count(&self, text: &str) -> usize;
}

const ENTITY_STOPWORDS: &[&str] = &[
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "in",
    "on",
    "of",
    "for",
    "to",
    "by",
    "with",
    "from",
    "via",
    "and",
    "or",
    "but",
    "if",
    "when",
    "while",
    "it",
    "its",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "as",
    "at",
    "an",
    "all",
    "any",
    "some",
    "there",
    "note",
    "versions",
    "version",
    "prior",
    "before",
    "after",
    "through",
    "up",
    "affected",
    "user",
    "users",
    "attacker",
    "attackers",
    "remote",
    "local",
    "authenticated",
    "unauthenticated",
    "successful",
    "exploitation",
    "vulnerability",
    "issue",
    "we",
    "they",
    "he",
    "she",
    "i",
    "cross-site",
    "sql",
    "denial",
    "due",
];

/// Capitalization heuristic: a maximal run of entity-like tokens counts once.
///
/// A token is entity-like when it contains an uppercase letter or mixes
/// letters and digits, is not a stopword, and does not start a sentence.
/// Trailing punctuation other than `.`-inside-a-word ends the run.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEntityCounter;

impl HeuristicEntityCounter {
    fn is_entity_like(word: &str) -> bool {
        let first = match word.chars().next() {
            Some(c) => c,
            None => return false,
        };
        if ENTITY_STOPWORDS.contains(&word.to_lowercase().as_str()) {
            return false;
        }
        let has_alpha = word.chars().any(char::is_alphabetic);
        let has_digit = word.chars().any(|c| c.is_ascii_digit());
        let inner_upper = word.chars().skip(1).any(char::is_uppercase);
        first.is_uppercase() || inner_upper || (has_alpha && has_digit)
    }
}

impl EntityCounter for HeuristicEntityCounter {
    fn count(&self, text: &str) -> usize {
        let mut count = 0;
        let mut in_run = false;
        let mut sentence_start = true;
        for raw in text.split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let ends_sentence = raw.ends_with(['.', '!', '?'])
                && !raw.trim_end_matches(['.', '!', '?']).contains('.');
            let breaks_run = raw.ends_with([',', ';', ':', ')', '(', '"']) || ends_sentence;

            let entity = !sentence_start && Self::is_entity_like(word);
            if entity && !in_run {
                count += 1;
            }
            in_run = entity && !breaks_run;
            sentence_start = ends_sentence;
        }
        count
    }
}

pub fn count_entities(text: &str) -> usize {
    HeuristicEntityCounter.count(text)
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Unigram frequency model over a description corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct IcModel {
    counts: HashMap<String, u64>,
    total: u64,
}

impl IcModel {
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0;
        for doc in corpus {
            for tok in tokenize(doc.as_ref()) {
                *counts.entry(tok).or_default() += 1;
                total += 1;
            }
        }
        IcModel { counts, total }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Corpus probability; unseen tokens get 1 / (total + vocabulary).
    pub fn probability(&self, token: &str) -> f64 {
        match self.counts.get(token) {
            Some(&c) => c as f64 / self.total as f64,
            None => 1.0 / (self.total + self.counts.len() as u64).max(1) as f64,
        }
    }
}

/// Mean surprisal, in bits, of the text's tokens under `model`.
pub fn information_content(text: &str, model: &IcModel) -> Result<f64, TextError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(TextError::EmptyText);
    }
    let sum: f64 = tokens.iter().map(|t| -model.probability(t).log2()).sum();
    Ok((sum / tokens.len() as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

impl CorrelationResult {
    pub fn p_band(&self) -> &'static str {
        if self.p_value < SIGNIFICANCE {
            "<0.05"
        } else {
            ">=0.05"
        }
    }
}

/// Product-moment correlation with a two-sided t-test p-value (n - 2 dof).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, TextError> {
    if x.len() != y.len() {
        return Err(TextError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(TextError::TooFewSamples(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TextError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if 1.0 - r.abs() < 1e-15 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(CorrelationResult { r, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Length,
    Entities,
    InformationContent,
}

impl Feature {
    pub const ALL: [Feature; 3] = [
        Feature::Length,
        Feature::Entities,
        Feature::InformationContent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Length => "length",
            Feature::Entities => "entities",
            // Corpus-frequency surprisal, not a taxonomy-based IC.
            Feature::InformationContent => "corpus_ic",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feature value per entry, in dataset order.
pub fn feature_values(
    entries: &[CveEntry],
    feature: Feature,
    ic: &IcModel,
    counter: &dyn EntityCounter,
) -> Vec<f64> {
    entries
        .iter()
        .map(|e| match feature {
            Feature::Length => char_length(&e.description) as f64,
            Feature::Entities => counter.count(&e.description) as f64,
            Feature::InformationContent => information_content(&e.description, ic).unwrap_or(0.0),
        })
        .collect()
}

/// Fraction of the eight metrics predicted exactly.
pub fn correctness(truth: &BaseVector, pred: &BaseVector) -> f64 {
    MetricKind::ALL
        .iter()
        .filter(|k| truth.get(**k) == pred.get(**k))
        .count() as f64
        / 8.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub model: String,
    /// `None` for the all-metric correctness score.
    pub metric: Option<MetricKind>,
    pub feature: Feature,
    pub result: Result<CorrelationResult, TextError>,
}

/// Correlates `feature` with per-CVE correctness for each model: once with
/// the fraction of correct metrics, then per metric with 0/1 correctness.
/// `predictions` holds `(model_id, labels aligned with entries)`.
pub fn correctness_correlates(
    entries: &[CveEntry],
    predictions: &[(String, Vec<BaseVector>)],
    feature: Feature,
    ic: &IcModel,
    counter: &dyn EntityCounter,
) -> Result<Vec<CorrelationRow>, TextError> {
    if predictions.iter().any(|(_, p)| p.len() != entries.len()) {
        return Err(TextError::CoverageMismatch);
    }
    let x = feature_values(entries, feature, ic, counter);
    let mut rows = Vec::new();
    for (model, preds) in predictions {
        let overall: Vec<f64> = entries
            .iter()
            .zip(preds)
            .map(|(e, p)| correctness(&e.truth, p))
            .collect();
        rows.push(CorrelationRow {
            model: model.clone(),
            metric: None,
            feature,
            result: pearson(&x, &overall),
        });
        for kind in MetricKind::ALL {
            let y: Vec<f64> = entries
                .iter()
                .zip(preds)
                .map(|(e, p)| f64::from(u8::from(e.truth.get(kind) == p.get(kind))))
                .collect();
            rows.push(CorrelationRow {
                model: model.clone(),
                metric: Some(kind),
                feature,
                result: pearson(&x, &y),
            });
        }
    }
    Ok(rows)
}

/// Distinct tokens, used for the vocabulary-size report line.
pub fn distinct_tokens<S: AsRef<str>>(corpus: &[S]) -> usize {
    corpus
        .iter()
        .flat_map(|d| tokenize(d.as_ref()))
        .collect::<HashSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_stats_endpoints() {
        let descs = ["x".repeat(28), "y".repeat(271), "z".repeat(3810)];
        let s = length_stats(&descs).unwrap();
        assert_eq!((s.min, s.max), (28, 3810));
        assert_eq!(s.median, 271.0);
        assert!((s.mean - (28.0 + 271.0 + 3810.0) / 3.0).abs() < 1e-12);

        let s = length_stats(&["only one"]).unwrap();
        assert_eq!(s.mean, 8.0);
        assert_eq!(s.median, 8.0);
        assert_eq!((s.min, s.max), (8, 8));

        let s = length_stats(&["ab", "abcd"]).unwrap();
        assert_eq!(s.median, 3.0);

        assert_eq!(length_stats::<&str>(&[]), Err(TextError::EmptyInput));
    }

    #[test]
    fn length_counts_chars_not_bytes() {
        assert_eq!(char_length("héllo"), 5);
    }

    #[test]
    fn histogram_partitions() {
        let long = "word ".repeat(45);
        let descs = vec!["a b c".to_string(), long.clone(), long, "x".into()];
        let s = length_stats(&descs).unwrap();
        assert_eq!(s.word_histogram, vec![(0, 2), (40, 2)]);
        assert_eq!(s.word_histogram.iter().map(|b| b.1).sum::<usize>(), 4);
    }

    #[test]
    fn entity_heuristic() {
        assert_eq!(
            count_entities("A flaw in Apache Tomcat allows remote attackers to read files."),
            1
        );
        assert_eq!(count_entities(""), 0);
        assert_eq!(count_entities("the quick brown fox"), 0);
        assert_eq!(
            count_entities("An issue in Microsoft Exchange Server and Cisco IOS XE was found."),
            2
        );
        assert_eq!(
            count_entities("The parser in libfoo2 crashes. Apache is fine."),
            1
        );
        assert_eq!(
            count_entities("Affects OpenSSL, GnuTLS and wolfSSL 5.2."),
            3
        );
    }

    #[test]
    fn ic_values() {
        let m = IcModel::build(&["a"]);
        assert_eq!(information_content("a", &m).unwrap(), 0.0);

        let m = IcModel::build(&["a b"]);
        assert!((information_content("a b", &m).unwrap() - 1.0).abs() < 1e-12);

        let m = IcModel::build(&["a a b"]);
        assert!((m.probability("a") - 2.0 / 3.0).abs() < 1e-12);
        let ic = information_content("a a b", &m).unwrap();
        assert!((ic - 0.9183).abs() < 1e-3);

        // Unseen: 1 / (3 + 2)
        assert!((m.probability("zzz") - 0.2).abs() < 1e-12);
        assert_eq!(information_content("!!", &m), Err(TextError::EmptyText));
    }

    #[test]
    fn ic_probabilities_sum_to_one() {
        let corpus = ["The overflow in the parser", "a crash in the parser of X"];
        let m = IcModel::build(&corpus);
        let sum: f64 = m.counts.keys().map(|k| m.probability(k)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(m.vocabulary_size(), distinct_tokens(&corpus));
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson(&x, &lin).unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-12);

        let r = pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.r - 0.8).abs() < 1e-9);
        // t = 0.8 * sqrt(2 / 0.36) = 1.8856; two-sided p with 2 dof = 0.2
        assert!((r.p_value - 0.2).abs() < 1e-6);
        assert_eq!(r.p_band(), ">=0.05");

        assert_eq!(pearson(&x, &[1.0; 4]), Err(TextError::ZeroVariance));
        assert_eq!(pearson(&x, &[1.0]), Err(TextError::LengthMismatch(4, 1)));
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(TextError::TooFewSamples(2))
        );
    }
}
