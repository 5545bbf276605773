//! Fixtures shared by the CLI test targets: a synthetic CVE corpus, a
//! simulated chat provider and a local HTTP server fronting it.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use vulnscore::cvss::{format_vector_string, BaseVector, MetricKind, MetricValue};
use vulnscore::gateway::{
    redact_identifiers, ChatTransport, HttpRequest, HttpResponse, ProviderConfig,
};
use vulnscore::gateway::{PredictionSet, PredictionTable};
use vulnscore::ingest::CveEntry;

pub const PROVIDERS: [(&str, f64); 6] = [
    ("G4", 0.80),
    ("G5", 0.76),
    ("L", 0.62),
    ("GM", 0.70),
    ("DS", 0.72),
    ("GR", 0.66),
];

const FLAWS: [&str; 8] = [
    "buffer overflow",
    "SQL injection",
    "cross-site scripting issue",
    "use-after-free",
    "path traversal",
    "missing authorization check",
    "integer overflow",
    "race condition",
];
const PRODUCTS: [&str; 6] = [
    "Acme Router",
    "Contoso Mail Server",
    "Fabrikam CMS",
    "Northwind Gateway",
    "Tailspin Media Player",
    "Woodgrove Banking App",
];
const COMPONENTS: [&str; 5] = [
    "the login handler",
    "the file upload module",
    "the XML parser",
    "the session manager",
    "the firmware update service",
];
const OUTCOMES: [&str; 5] = [
    "execute arbitrary code",
    "read sensitive files",
    "cause a denial of service",
    "escalate privileges",
    "bypass authentication",
];

/// Level distribution skewed towards the first canonical level, as in real data.
fn skewed(levels: &[MetricValue], rng: &mut ChaCha8Rng) -> MetricValue {
    let weights = [0.6, 0.25, 0.1, 0.05];
    let total: f64 = weights[..levels.len()].iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (l, w) in levels.iter().zip(weights) {
        if u < w {
            return *l;
        }
        u -= w;
    }
    levels[levels.len() - 1]
}

/// `n` English entries with unique descriptions. The first eight cycle
/// through every level so each class of every metric occurs at least twice.
pub fn synthetic_entries(n: usize, seed: u64) -> Vec<CveEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut values = [MetricValue::Unknown; 8];
            for (k, kind) in MetricKind::ALL.iter().enumerate() {
                let levels = kind.levels();
                values[k] = if i < 8 {
                    levels[(i + k) % levels.len()]
                } else {
                    skewed(levels, &mut rng)
                };
            }
            let mut description = format!(
                "A {} in {} of {} {}.{}.{} allows a remote attacker to {} in some configurations.",
                FLAWS[rng.gen_range(0..FLAWS.len())],
                COMPONENTS[rng.gen_range(0..COMPONENTS.len())],
                PRODUCTS[rng.gen_range(0..PRODUCTS.len())],
                1 + i / 100,
                i % 100,
                rng.gen_range(0..10),
                OUTCOMES[rng.gen_range(0..OUTCOMES.len())],
            );
            if i % 5 == 0 {
                description.push_str(&format!(
                    " This is a different vulnerability than CVE-2020-{:04}.",
                    rng.gen_range(1000..9999)
                ));
            }
            CveEntry {
                cve_id: format!("CVE-2021-{:05}", 10000 + i),
                description,
                truth: BaseVector::new(values).unwrap(),
                published_year: 2021,
            }
        })
        .collect()
}

pub fn record_json(id: &str, year: i32, lang: &str, text: &str, vector: Option<&str>) -> Value {
    let metrics: Vec<Value> = vector
        .map(|v| {
            let key = if v.starts_with("CVSS:3.0/") {
                "cvssV3_0"
            } else {
                "cvssV3_1"
            };
            vec![json!({ key: { "vectorString": v } })]
        })
        .unwrap_or_default();
    json!({
        "dataType": "CVE_RECORD",
        "cveMetadata": { "cveId": id, "datePublished": format!("{year}-06-01T00:00:00") },
        "containers": { "cna": {
            "descriptions": [{ "lang": lang, "value": text }],
            "metrics": metrics,
        }}
    })
}

pub fn entry_json(e: &CveEntry) -> Value {
    let v = format_vector_string(&e.truth).unwrap();
    record_json(&e.cve_id, e.published_year, "en", &e.description, Some(&v))
}

/// Writes one file per entry plus, if `with_rejects`, one record failing
/// each filter rule and an unparseable file.
pub fn write_record_dir(dir: &Path, entries: &[CveEntry], with_rejects: bool) {
    for e in entries {
        let sub = dir.join(e.published_year.to_string());
        fs::create_dir_all(&sub).unwrap();
        fs::write(
            sub.join(format!("{}.json", e.cve_id)),
            entry_json(e).to_string(),
        )
        .unwrap();
    }
    if !with_rejects {
        return;
    }
    let full = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H";
    let rejects = [
        record_json(
            "CVE-2017-0001",
            2017,
            "en",
            "An old issue in the kernel of the system.",
            Some(full),
        ),
        record_json(
            "CVE-2022-0002",
            2022,
            "en",
            "A flaw in the parser of the tool.",
            Some("CVSS:3.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"),
        ),
        record_json(
            "CVE-2022-0003",
            2022,
            "en",
            "A flaw in the parser of the tool.",
            Some("CVSS:3.1/AV:N/AC:L"),
        ),
        record_json("CVE-2022-0004", 2022, "en", "   ", Some(full)),
        record_json(
            "CVE-2022-0005",
            2022,
            "es",
            "Un fallo en el analizador de la herramienta.",
            Some(full),
        ),
    ];
    let sub = dir.join("rejects");
    fs::create_dir_all(&sub).unwrap();
    for (i, r) in rejects.iter().enumerate() {
        fs::write(sub.join(format!("r{i}.json")), r.to_string()).unwrap();
    }
    fs::write(sub.join("broken.json"), "{ not json").unwrap();
}

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in parts {
        for b in p.bytes().chain([0u8]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Deterministic stand-in for a chat-completions API. Each model answers a
/// field correctly with its configured probability, decided by hashing
/// (model, description, metric).
pub struct SimulatedProvider {
    truth: HashMap<String, BaseVector>,
    accuracy: HashMap<String, f64>,
    pub calls: AtomicUsize,
}

impl SimulatedProvider {
    pub fn new(entries: &[CveEntry]) -> Self {
        SimulatedProvider {
            truth: entries
                .iter()
                .map(|e| (redact_identifiers(&e.description), e.truth))
                .collect(),
            accuracy: PROVIDERS
                .iter()
                .map(|(id, a)| (id.to_string(), *a))
                .collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn answer_field(
        &self,
        model: &str,
        desc: &str,
        kind: MetricKind,
        truth: MetricValue,
    ) -> String {
        let acc = self.accuracy.get(model).copied().unwrap_or(0.5);
        let h = fnv1a(&[model, desc, kind.abbrev()]);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        if u < 0.01 {
            return "not sure".into();
        }
        let levels = kind.levels();
        let value = if u < acc {
            truth
        } else {
            let t = kind.class_index(truth).unwrap();
            levels[(t + 1 + (h % (levels.len() as u64 - 1)) as usize) % levels.len()]
        };
        kind.level_name(value).to_string()
    }

    pub fn answer(&self, model: &str, user: &str) -> String {
        let mut lines = Vec::new();
        let mut in_batch = false;
        for line in user.lines() {
            if line.starts_with("Descriptions (") {
                in_batch = true;
                continue;
            }
            if !in_batch {
                continue;
            }
            let Some(desc) = line.split_once("] ").map(|(_, d)| d) else {
                continue;
            };
            let fields: Vec<String> = match self.truth.get(desc) {
                Some(t) => MetricKind::ALL
                    .iter()
                    .map(|&k| self.answer_field(model, desc, k, t.get(k)))
                    .collect(),
                None => vec!["?".into(); 8],
            };
            lines.push(fields.join(" | "));
        }
        lines.join("\n")
    }
}

/// Prediction rows for `models` without going through prompts.
pub fn simulated_table(entries: &[CveEntry], models: &[&str]) -> PredictionTable {
    let sim = SimulatedProvider::new(entries);
    let mut rows = Vec::new();
    for e in entries {
        for m in models {
            let mut values = [MetricValue::Unknown; 8];
            for (slot, &k) in values.iter_mut().zip(MetricKind::ALL.iter()) {
                let field = sim.answer_field(m, &e.description, k, e.truth.get(k));
                *slot = vulnscore::gateway::normalize_label(&field, k);
            }
            rows.push(PredictionSet::new(
                &e.cve_id,
                m,
                BaseVector::new(values).unwrap(),
            ));
        }
    }
    PredictionTable::new(rows).unwrap()
}

impl ChatTransport for SimulatedProvider {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body: Value = serde_json::from_str(&request.body).map_err(|e| e.to_string())?;
        let model = body["model"].as_str().unwrap_or_default();
        let user = body["messages"][1]["content"].as_str().unwrap_or_default();
        let content = self.answer(model, user);
        Ok(HttpResponse {
            status: 200,
            headers: vec![("content-type".into(), "application/json".into())],
            body:
                json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })
                    .to_string(),
        })
    }
}

/// Serves `provider` over plain HTTP on a loopback port; returns the endpoint URL.
pub fn serve(provider: Arc<SimulatedProvider>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let provider = provider.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = l.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let resp = provider
                    .post(&HttpRequest {
                        url: String::new(),
                        headers: Vec::new(),
                        body: String::from_utf8_lossy(&body).into_owned(),
                        timeout: std::time::Duration::from_secs(5),
                    })
                    .unwrap();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {} OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    resp.status,
                    resp.body.len(),
                    resp.body
                );
            });
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

/// Config naming every simulated provider; the model name sent over the
/// wire is the provider id so the simulator can look up its accuracy.
pub fn write_config(dir: &Path, endpoint: &str, cache: &Path, extra: &str) -> PathBuf {
    let mut text = format!(
        "cache = {:?}\n{extra}\n[retry]\nmax_attempts = 2\nbase_delay_ms = 10\nmax_delay_ms = 50\n",
        cache.display().to_string()
    );
    for (id, _) in PROVIDERS {
        text.push_str(&format!(
            "\n[[providers]]\nprovider_id = \"{id}\"\nendpoint = \"{endpoint}\"\nmodel_name = \"{id}\"\nmax_parallel = 2\n"
        ));
    }
    let path = dir.join("vulnscore.toml");
    fs::write(&path, text).unwrap();
    path
}

/// The same providers as [`write_config`], for library-level runs.
pub fn wire_providers(endpoint: &str) -> Vec<ProviderConfig> {
    PROVIDERS
        .iter()
        .map(|(id, _)| {
            let mut p = ProviderConfig::new(id, endpoint, id);
            p.max_parallel = 2;
            p
        })
        .collect()
}

pub fn vulnscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulnscore"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("run vulnscore")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
