use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{
    build_prompt, parse_response, submit_batch, ChatTransport, GatewayError, Mode, PredictionSet,
    Prompt, PromptSpec, ProviderConfig, ReplayCache, RetryPolicy,
};
use crate::cvss::{BaseVector, MetricKind, MetricValue};
use crate::ingest::CveEntry;

/// Errors that stopped (part of) one provider's run.
#[derive(Debug)]
pub struct ProviderFailure {
    pub provider_id: String,
    pub errors: Vec<GatewayError>,
}

impl ProviderFailure {
    /// Cache keys that replay could not find.
    pub fn missing_keys(&self) -> Vec<String> {
        self.errors
            .iter()
            .filter_map(|e| match e {
                GatewayError::CacheMiss { model_id, key } => Some(format!("{model_id}:{key}")),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct PredictionRun {
    pub table: PredictionTable,
    pub failures: Vec<ProviderFailure>,
    /// Number of prompts built per provider.
    pub prompts_per_provider: usize,
}

/// One row per (cve_id, model_id), kept sorted by that pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionTable {
    rows: Vec<PredictionSet>,
}

const HEADER: [&str; 11] = [
    "cve_id", "model_id", "AC", "AV", "PR", "UI", "S", "C", "I", "A", "valid",
];

impl PredictionTable {
    pub fn new(mut rows: Vec<PredictionSet>) -> Result<Self, GatewayError> {
        rows.sort_by(|a, b| (&a.cve_id, &a.model_id).cmp(&(&b.cve_id, &b.model_id)));
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[0].cve_id == w[1].cve_id && w[0].model_id == w[1].model_id)
        {
            return Err(GatewayError::Schema(format!(
                "duplicate row for ({}, {})",
                w[0].cve_id, w[0].model_id
            )));
        }
        Ok(PredictionTable { rows })
    }

    pub fn rows(&self) -> &[PredictionSet] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn model_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.rows.iter().map(|r| r.model_id.as_str()).collect();
        ids.into_iter().map(str::to_owned).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.cve_id.as_str(), r.model_id.as_str()];
            rec.extend(MetricKind::ALL.iter().map(|k| r.labels.get(*k).code()));
            rec.push(if r.valid { "true" } else { "false" });
            w.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GatewayError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, GatewayError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| GatewayError::Schema(e.to_string()))?
            .clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(GatewayError::Schema(format!(
                "expected header {}, found {}",
                HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| GatewayError::Schema(format!("line {line}: {e}")))?;
            let bad = |what: &str| GatewayError::Schema(format!("line {line}: {what}"));
            let mut values = [MetricValue::Unknown; 8];
            for (j, kind) in MetricKind::ALL.iter().enumerate() {
                let field = &rec[2 + j];
                let v = MetricValue::from_code(field)
                    .filter(|v| v.is_unknown() || kind.accepts(*v))
                    .ok_or_else(|| bad(&format!("invalid {} value {field:?}", kind.abbrev())))?;
                values[j] = v;
            }
            let labels = BaseVector::new(values).map_err(|e| bad(&e.to_string()))?;
            let valid = match &rec[10] {
                "true" => true,
                "false" => false,
                other => return Err(bad(&format!("invalid valid flag {other:?}"))),
            };
            if valid != labels.is_complete() {
                return Err(bad("valid flag disagrees with labels"));
            }
            if rec[0].is_empty() || rec[1].is_empty() {
                return Err(bad("empty id"));
            }
            rows.push(PredictionSet::new(&rec[0], &rec[1], labels));
        }
        PredictionTable::new(rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self, GatewayError> {
        PredictionTable::from_csv(&fs::read_to_string(path)?)
    }

    /// Per model, the predicted vectors in `entries` order. Every entry must
    /// have a row for every model in the table.
    pub fn aligned(
        &self,
        entries: &[CveEntry],
    ) -> Result<Vec<(String, Vec<BaseVector>)>, GatewayError> {
        let mut by_model: BTreeMap<&str, BTreeMap<&str, BaseVector>> = BTreeMap::new();
        for r in &self.rows {
            by_model
                .entry(&r.model_id)
                .or_default()
                .insert(&r.cve_id, r.labels);
        }
        if by_model.is_empty() {
            return Err(GatewayError::CoverageMismatch("no predictions".into()));
        }
        let mut out = Vec::new();
        for (model, rows) in by_model {
            let mut preds = Vec::with_capacity(entries.len());
            for e in entries {
                let v = rows.get(e.cve_id.as_str()).ok_or_else(|| {
                    GatewayError::CoverageMismatch(format!(
                        "model {model} has no prediction for {}",
                        e.cve_id
                    ))
                })?;
                preds.push(*v);
            }
            if rows.len() > entries.len() {
                log::warn!(
                    "model {model}: {} predictions for CVEs outside the dataset ignored",
                    rows.len() - entries.len()
                );
            }
            out.push((model.to_owned(), preds));
        }
        Ok(out)
    }
}

fn run_provider(
    cfg: &ProviderConfig,
    batches: &[(Vec<String>, Prompt)],
    cache: &ReplayCache,
    mode: Mode,
    transport: &dyn ChatTransport,
    policy: &RetryPolicy,
) -> (Vec<PredictionSet>, Vec<GatewayError>) {
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let responses: Mutex<Vec<Option<String>>> = Mutex::new(vec![None; batches.len()]);
    let errors: Mutex<Vec<(usize, GatewayError)>> = Mutex::new(Vec::new());

    thread::scope(|s| {
        for _ in 0..cfg.max_parallel.min(batches.len()).max(1) {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((_, prompt)) = batches.get(i) else {
                    break;
                };
                match submit_batch(cfg, prompt, cache, mode, transport, policy) {
                    Ok(raw) => responses.lock().unwrap()[i] = Some(raw),
                    Err(e) => {
                        // Replay keeps going so every missing key is reported at once.
                        if !matches!(e, GatewayError::CacheMiss { .. }) {
                            abort.store(true, Ordering::SeqCst);
                        }
                        errors.lock().unwrap().push((i, e));
                    }
                }
            });
        }
    });

    let responses = responses.into_inner().unwrap();
    let mut rows = Vec::new();
    for ((ids, _), raw) in batches.iter().zip(responses) {
        match raw {
            Some(raw) => rows.extend(parse_response(&raw, ids, &cfg.provider_id)),
            None => rows.extend(
                ids.iter()
                    .map(|id| PredictionSet::unknown(id, &cfg.provider_id)),
            ),
        }
    }
    let mut errors = errors.into_inner().unwrap();
    errors.sort_by_key(|(i, _)| *i);
    (rows, errors.into_iter().map(|(_, e)| e).collect())
}

/// Queries every provider for every entry in batches of `spec.batch_size`.
///
/// A provider that fails is stopped; batches it did not answer get all-UNKNOWN
/// rows so the table always holds one row per (entry, provider).
pub fn run_predictions(
    entries: &[CveEntry],
    providers: &[ProviderConfig],
    spec: &PromptSpec,
    cache: &ReplayCache,
    mode: Mode,
    transport: &dyn ChatTransport,
    policy: &RetryPolicy,
) -> Result<PredictionRun, GatewayError> {
    if entries.is_empty() {
        return Err(GatewayError::EmptyBatch);
    }
    spec.validate()?;
    let mut seen = BTreeSet::new();
    for p in providers {
        p.validate().map_err(GatewayError::InvalidSpec)?;
        if !seen.insert(p.provider_id.as_str()) {
            return Err(GatewayError::InvalidSpec(format!(
                "duplicate provider_id {}",
                p.provider_id
            )));
        }
    }

    let batches = entries
        .chunks(spec.batch_size)
        .map(|chunk| {
            let texts: Vec<&str> = chunk.iter().map(|e| e.description.as_str()).collect();
            let ids = chunk.iter().map(|e| e.cve_id.clone()).collect();
            Ok((ids, build_prompt(&texts, spec)?))
        })
        .collect::<Result<Vec<_>, GatewayError>>()?;

    let results: Vec<(Vec<PredictionSet>, Vec<GatewayError>)> = thread::scope(|s| {
        let handles: Vec<_> = providers
            .iter()
            .map(|cfg| s.spawn(|| run_provider(cfg, &batches, cache, mode, transport, policy)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("provider worker panicked"))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cfg, (provider_rows, errors)) in providers.iter().zip(results) {
        rows.extend(provider_rows);
        if !errors.is_empty() {
            failures.push(ProviderFailure {
                provider_id: cfg.provider_id.clone(),
                errors,
            });
        }
    }
    Ok(PredictionRun {
        table: PredictionTable::new(rows)?,
        failures,
        prompts_per_provider: batches.len(),
    })
}
