//! CVSS v3.1 base metrics: domain types, vector strings, weights and scoring.
//!
//! Metric levels are represented by their single-letter vector codes. A level
//! is only meaningful together with its [`MetricKind`]; `L` is "Local" for the
//! attack vector but "Low" for attack complexity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VECTOR_PREFIX: &str = "CVSS:3.1/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CvssError {
    #[error("malformed vector string: {0}")]
    MalformedVector(String),
    #[error("vector contains an UNKNOWN level for {0}")]
    ContainsUnknown(MetricKind),
    #[error("level {value} is not valid for {kind}")]
    InvalidValueForKind {
        kind: MetricKind,
        value: MetricValue,
    },
    #[error("UNKNOWN has no ordinal value ({0})")]
    UnknownValue(MetricKind),
}

/// The eight base metrics.
///
/// Declaration order is the report/prompt layout (AC, AV, PR, UI, S, C, I, A).
/// Vector strings use [`MetricKind::VECTOR_ORDER`] instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    AttackComplexity,
    AttackVector,
    PrivilegesRequired,
    UserInteraction,
    Scope,
    Confidentiality,
    Integrity,
    Availability,
}

impl MetricKind {
    /// Report order: AC, AV, PR, UI, S, C, I, A.
    pub const ALL: [MetricKind; 8] = [
        MetricKind::AttackComplexity,
        MetricKind::AttackVector,
        MetricKind::PrivilegesRequired,
        MetricKind::UserInteraction,
        MetricKind::Scope,
        MetricKind::Confidentiality,
        MetricKind::Integrity,
        MetricKind::Availability,
    ];

    /// Canonical vector-string order: AV, AC, PR, UI, S, C, I, A.
    pub const VECTOR_ORDER: [MetricKind; 8] = [
        MetricKind::AttackVector,
        MetricKind::AttackComplexity,
        MetricKind::PrivilegesRequired,
        MetricKind::UserInteraction,
        MetricKind::Scope,
        MetricKind::Confidentiality,
        MetricKind::Integrity,
        MetricKind::Availability,
    ];

    /// Position in [`MetricKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            MetricKind::AttackVector => "AV",
            MetricKind::AttackComplexity => "AC",
            MetricKind::PrivilegesRequired => "PR",
            MetricKind::UserInteraction => "UI",
            MetricKind::Scope => "S",
            MetricKind::Confidentiality => "C",
            MetricKind::Integrity => "I",
            MetricKind::Availability => "A",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::AttackVector => "Attack Vector",
            MetricKind::AttackComplexity => "Attack Complexity",
            MetricKind::PrivilegesRequired => "Privileges Required",
            MetricKind::UserInteraction => "User Interaction",
            MetricKind::Scope => "Scope",
            MetricKind::Confidentiality => "Confidentiality Impact",
            MetricKind::Integrity => "Integrity Impact",
            MetricKind::Availability => "Availability Impact",
        }
    }

    pub fn from_abbrev(s: &str) -> Option<MetricKind> {
        MetricKind::ALL.into_iter().find(|k| k.abbrev() == s)
    }

    /// Valid levels in canonical order (descending weight, as tabulated).
    /// Class codes and tie-breaking everywhere use this order.
    pub fn levels(self) -> &'static [MetricValue] {
        use MetricValue::*;
        match self {
            MetricKind::AttackVector => &[N, A, L, P],
            MetricKind::AttackComplexity => &[L, H],
            MetricKind::PrivilegesRequired => &[N, L, H],
            MetricKind::UserInteraction => &[N, R],
            MetricKind::Scope => &[U, C],
            MetricKind::Confidentiality | MetricKind::Integrity | MetricKind::Availability => {
                &[H, L, N]
            }
        }
    }

    pub fn accepts(self, value: MetricValue) -> bool {
        self.levels().contains(&value)
    }

    /// Index of `value` in [`MetricKind::levels`], `None` for UNKNOWN or foreign levels.
    pub fn class_index(self, value: MetricValue) -> Option<usize> {
        self.levels().iter().position(|&v| v == value)
    }

    /// Largest possible distance between two ordinal encodings.
    pub fn max_ordinal_distance(self) -> u32 {
        self.levels().len() as u32 - 1
    }

    /// Human-readable level name for this metric.
    pub fn level_name(self, value: MetricValue) -> &'static str {
        use MetricValue::*;
        match (self, value) {
            (_, Unknown) => "UNKNOWN",
            (MetricKind::AttackVector, N) => "NETWORK",
            (MetricKind::AttackVector, A) => "ADJACENT",
            (MetricKind::AttackVector, L) => "LOCAL",
            (MetricKind::AttackVector, P) => "PHYSICAL",
            (MetricKind::UserInteraction, R) => "REQUIRED",
            (MetricKind::Scope, U) => "UNCHANGED",
            (MetricKind::Scope, C) => "CHANGED",
            (_, N) => "NONE",
            (_, L) => "LOW",
            (_, H) => "HIGH",
            _ => "INVALID",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// A metric level by vector code, or UNKNOWN for unusable predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricValue {
    N,
    A,
    L,
    P,
    H,
    R,
    U,
    C,
    Unknown,
}

impl MetricValue {
    pub fn code(self) -> &'static str {
        match self {
            MetricValue::N => "N",
            MetricValue::A => "A",
            MetricValue::L => "L",
            MetricValue::P => "P",
            MetricValue::H => "H",
            MetricValue::R => "R",
            MetricValue::U => "U",
            MetricValue::C => "C",
            MetricValue::Unknown => "UNKNOWN",
        }
    }

    pub fn from_code(s: &str) -> Option<MetricValue> {
        Some(match s {
            "N" => MetricValue::N,
            "A" => MetricValue::A,
            "L" => MetricValue::L,
            "P" => MetricValue::P,
            "H" => MetricValue::H,
            "R" => MetricValue::R,
            "U" => MetricValue::U,
            "C" => MetricValue::C,
            "UNKNOWN" => MetricValue::Unknown,
            _ => return None,
        })
    }

    pub fn is_unknown(self) -> bool {
        self == MetricValue::Unknown
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One level per base metric, indexed by [`MetricKind::index`].
///
/// Ground truth never holds UNKNOWN; predictions may.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseVector([MetricValue; 8]);

impl BaseVector {
    /// Builds a vector from levels in report order (AC, AV, PR, UI, S, C, I, A).
    pub fn new(values: [MetricValue; 8]) -> Result<Self, CvssError> {
        for (kind, value) in MetricKind::ALL.iter().zip(values) {
            if !value.is_unknown() && !kind.accepts(value) {
                return Err(CvssError::InvalidValueForKind { kind: *kind, value });
            }
        }
        Ok(BaseVector(values))
    }

    /// Builds a vector from levels in vector-string order (AV, AC, PR, UI, S, C, I, A).
    pub fn from_vector_order(values: [MetricValue; 8]) -> Result<Self, CvssError> {
        let mut slots = [MetricValue::Unknown; 8];
        for (kind, value) in MetricKind::VECTOR_ORDER.iter().zip(values) {
            slots[kind.index()] = value;
        }
        BaseVector::new(slots)
    }

    pub fn unknown() -> Self {
        BaseVector([MetricValue::Unknown; 8])
    }

    pub fn get(&self, kind: MetricKind) -> MetricValue {
        self.0[kind.index()]
    }

    pub fn values(&self) -> &[MetricValue; 8] {
        &self.0
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(|v| !v.is_unknown())
    }

    fn first_unknown(&self) -> Option<MetricKind> {
        MetricKind::VECTOR_ORDER
            .into_iter()
            .find(|k| self.get(*k).is_unknown())
    }

    fn require_complete(&self) -> Result<(), CvssError> {
        match self.first_unknown() {
            Some(kind) => Err(CvssError::ContainsUnknown(kind)),
            None => Ok(()),
        }
    }

    /// Every complete vector, 2592 in total.
    pub fn enumerate_all() -> Vec<BaseVector> {
        let mut out = vec![BaseVector([MetricValue::Unknown; 8])];
        for kind in MetricKind::ALL {
            out = out
                .into_iter()
                .flat_map(|v| {
                    kind.levels().iter().map(move |&level| {
                        let mut next = v;
                        next.0[kind.index()] = level;
                        next
                    })
                })
                .collect();
        }
        out
    }
}

impl FromStr for BaseVector {
    type Err = CvssError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_vector_string(s)
    }
}

impl fmt::Display for BaseVector {
    /// Vector-string form; UNKNOWN slots are written as `UNKNOWN`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(VECTOR_PREFIX.trim_end_matches('/'))?;
        for kind in MetricKind::VECTOR_ORDER {
            write!(f, "/{}:{}", kind.abbrev(), self.get(kind))?;
        }
        Ok(())
    }
}

pub fn parse_vector_string(text: &str) -> Result<BaseVector, CvssError> {
    let text = text.trim();
    let body = text
        .strip_prefix(VECTOR_PREFIX)
        .ok_or_else(|| CvssError::MalformedVector(format!("expected prefix {VECTOR_PREFIX:?}")))?;

    let mut slots: [Option<MetricValue>; 8] = [None; 8];
    for token in body.split('/') {
        let (key, value) = token
            .split_once(':')
            .ok_or_else(|| CvssError::MalformedVector(format!("bad token {token:?}")))?;
        let kind = MetricKind::from_abbrev(key)
            .ok_or_else(|| CvssError::MalformedVector(format!("unknown metric {key:?}")))?;
        let level = MetricValue::from_code(value)
            .filter(|v| kind.accepts(*v))
            .ok_or_else(|| {
                CvssError::MalformedVector(format!("invalid value {value:?} for {kind}"))
            })?;
        let slot = &mut slots[kind.index()];
        if slot.is_some() {
            return Err(CvssError::MalformedVector(format!(
                "duplicate metric {kind}"
            )));
        }
        *slot = Some(level);
    }

    let missing: Vec<&str> = MetricKind::VECTOR_ORDER
        .iter()
        .filter(|k| slots[k.index()].is_none())
        .map(|k| k.abbrev())
        .collect();
    if !missing.is_empty() {
        return Err(CvssError::MalformedVector(format!(
            "missing {}",
            missing.join(",")
        )));
    }
    Ok(BaseVector(slots.map(|s| s.expect("checked above"))))
}

pub fn format_vector_string(v: &BaseVector) -> Result<String, CvssError> {
    v.require_complete()?;
    Ok(v.to_string())
}

/// Tabulated weight for a level. `scope` only matters for privileges required.
pub fn metric_weight(
    kind: MetricKind,
    value: MetricValue,
    scope: MetricValue,
) -> Result<f64, CvssError> {
    use MetricKind::*;
    use MetricValue::*;
    if !kind.accepts(value) {
        return Err(CvssError::InvalidValueForKind { kind, value });
    }
    let changed = match scope {
        C => true,
        U => false,
        other => {
            return Err(CvssError::InvalidValueForKind {
                kind: Scope,
                value: other,
            })
        }
    };
    let w = match (kind, value) {
        (AttackVector, N) => 0.85,
        (AttackVector, A) => 0.62,
        (AttackVector, L) => 0.55,
        (AttackVector, P) => 0.20,
        (AttackComplexity, L) => 0.77,
        (AttackComplexity, H) => 0.44,
        (PrivilegesRequired, N) => 0.85,
        (PrivilegesRequired, L) if changed => 0.68,
        (PrivilegesRequired, L) => 0.62,
        (PrivilegesRequired, H) if changed => 0.50,
        (PrivilegesRequired, H) => 0.27,
        (UserInteraction, N) => 0.85,
        (UserInteraction, R) => 0.62,
        // Scope has no weight of its own; it selects formulas.
        (Scope, _) => 1.0,
        (_, H) => 0.56,
        (_, L) => 0.22,
        (_, N) => 0.0,
        _ => unreachable!("accepts() filtered invalid pairs"),
    };
    Ok(w)
}

fn weight(v: &BaseVector, kind: MetricKind) -> f64 {
    metric_weight(kind, v.get(kind), v.get(MetricKind::Scope))
        .expect("complete vector has valid levels")
}

/// 8.22 × AV × AC × PR × UI
pub fn exploitability_subscore(v: &BaseVector) -> Result<f64, CvssError> {
    v.require_complete()?;
    Ok(8.22
        * weight(v, MetricKind::AttackVector)
        * weight(v, MetricKind::AttackComplexity)
        * weight(v, MetricKind::PrivilegesRequired)
        * weight(v, MetricKind::UserInteraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 5] = [
        Severity::None,
        Severity::Low,
        Severity::Medium,
        Severity::High,
        Severity::Critical,
    ];

    /// Qualitative rating band for a score already rounded to one decimal.
    pub fn from_score(score: f64) -> Severity {
        let tenths = (score * 10.0).round() as i64;
        match tenths {
            i64::MIN..=0 => Severity::None,
            1..=39 => Severity::Low,
            40..=69 => Severity::Medium,
            70..=89 => Severity::High,
            _ => Severity::Critical,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::None => "None",
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
            Severity::Critical => "Critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub exploitability: f64,
    pub iss: f64,
    pub impact: f64,
    pub base_score: f64,
    pub severity: Severity,
}

/// Smallest multiple of 0.1 that is >= `value`, evaluated on an integer grid
/// of 1e-5 so that e.g. 4.000000000000001 rounds to 4.0, not 4.1.
pub fn roundup(value: f64) -> f64 {
    let scaled = (value * 100_000.0).round() as i64;
    if scaled % 10_000 == 0 {
        scaled as f64 / 100_000.0
    } else {
        (scaled.div_euclid(10_000) + 1) as f64 / 10.0
    }
}

pub fn base_score(v: &BaseVector) -> Result<ScoreBreakdown, CvssError> {
    let exploitability = exploitability_subscore(v)?;
    let c = weight(v, MetricKind::Confidentiality);
    let i = weight(v, MetricKind::Integrity);
    let a = weight(v, MetricKind::Availability);
    let iss = 1.0 - (1.0 - c) * (1.0 - i) * (1.0 - a);
    let changed = v.get(MetricKind::Scope) == MetricValue::C;
    let impact = if changed {
        7.52 * (iss - 0.029) - 3.25 * (iss - 0.02).powi(15)
    } else {
        6.42 * iss
    };

    let base = if impact <= 0.0 {
        0.0
    } else if changed {
        roundup((1.08 * (impact + exploitability)).min(10.0))
    } else {
        roundup((impact + exploitability).min(10.0))
    };

    Ok(ScoreBreakdown {
        exploitability,
        iss,
        impact,
        base_score: base,
        severity: Severity::from_score(base),
    })
}

/// Severity-ordered integer encoding; larger means more severe.
pub fn ordinal_value(kind: MetricKind, value: MetricValue) -> Result<u32, CvssError> {
    if value.is_unknown() {
        return Err(CvssError::UnknownValue(kind));
    }
    use MetricKind::*;
    use MetricValue::*;
    let ord = match (kind, value) {
        (AttackVector, P) => 0,
        (AttackVector, L) => 1,
        (AttackVector, A) => 2,
        (AttackVector, N) => 3,
        (AttackComplexity, H) => 0,
        (AttackComplexity, L) => 1,
        (PrivilegesRequired, H) => 0,
        (PrivilegesRequired, L) => 1,
        (PrivilegesRequired, N) => 2,
        (UserInteraction, R) => 0,
        (UserInteraction, N) => 1,
        (Scope, U) => 0,
        (Scope, C) => 1,
        (Confidentiality | Integrity | Availability, N) => 0,
        (Confidentiality | Integrity | Availability, L) => 1,
        (Confidentiality | Integrity | Availability, H) => 2,
        _ => return Err(CvssError::InvalidValueForKind { kind, value }),
    };
    Ok(ord)
}
