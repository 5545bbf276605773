use std::env;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{GatewayError, Mode, Prompt, ProviderConfig, ReplayCache};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Sends one HTTP POST. `Err` means the request never produced a response
/// (connection failure, timeout) and is treated as transient.
pub trait ChatTransport: Send + Sync {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ReqwestTransport { client })
    }
}

impl ChatTransport for ReqwestTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let mut builder = self
            .client
            .post(&request.url)
            .timeout(request.timeout)
            .header("Content-Type", "application/json")
            .body(request.body.clone());
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let resp = builder.send().map_err(|e| e.without_url().to_string())?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_owned(), v.to_str().ok()?.to_owned())))
            .collect();
        let body = resp.text().map_err(|e| e.without_url().to_string())?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

/// A transport that refuses every request.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineTransport;

impl ChatTransport for OfflineTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        Err(format!(
            "network disabled (attempted POST to {})",
            request.url
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff before attempt `attempt + 1` (1-based `attempt`).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Parses `Retry-After` seconds or OpenAI-style reset values such as
/// `1s`, `250ms`, `1m30s`.
fn parse_delay(value: &str) -> Option<Duration> {
    let value = value.trim();
    if let Ok(secs) = value.parse::<f64>() {
        return (secs >= 0.0).then(|| Duration::from_secs_f64(secs));
    }
    let mut total = 0.0;
    let mut num = String::new();
    let mut chars = value.chars().peekable();
    let mut parsed_any = false;
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() || c == '.' {
            num.push(c);
            continue;
        }
        let n: f64 = num.parse().ok()?;
        num.clear();
        let unit = match c {
            'm' if chars.peek() == Some(&'s') => {
                chars.next();
                0.001
            }
            'h' => 3600.0,
            'm' => 60.0,
            's' => 1.0,
            _ => return None,
        };
        total += n * unit;
        parsed_any = true;
    }
    (parsed_any && num.is_empty()).then(|| Duration::from_secs_f64(total))
}

fn build_request(cfg: &ProviderConfig, prompt: &Prompt) -> Result<HttpRequest, GatewayError> {
    let mut headers = Vec::new();
    if let Some(var) = &cfg.credential_env_var {
        let key = env::var(var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::AuthError {
                provider: cfg.provider_id.clone(),
                message: format!("environment variable {var} is not set"),
            })?;
        headers.push((
            cfg.auth_header.clone(),
            format!("{}{}", cfg.auth_prefix, key),
        ));
    }
    for (k, v) in &cfg.extra_headers {
        headers.push((k.clone(), v.clone()));
    }
    let body = json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
    });
    Ok(HttpRequest {
        url: cfg.endpoint.clone(),
        headers,
        body: body.to_string(),
        timeout: Duration::from_secs(cfg.timeout_secs),
    })
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?
        .as_str()
        .map(str::to_owned)
}

fn is_transient(status: u16) -> bool {
    matches!(status, 408 | 409 | 425 | 429) || (500..600).contains(&status)
}

fn call_provider(
    cfg: &ProviderConfig,
    prompt: &Prompt,
    transport: &dyn ChatTransport,
    policy: &RetryPolicy,
) -> Result<String, GatewayError> {
    let request = build_request(cfg, prompt)?;
    let provider_err = |message: String| GatewayError::ProviderError {
        provider: cfg.provider_id.clone(),
        message,
    };
    let mut last_error = String::new();
    for attempt in 1..=policy.max_attempts.max(1) {
        let mut wait = policy.backoff(attempt);
        match transport.post(&request) {
            Ok(resp) if (200..300).contains(&resp.status) => {
                let content = extract_content(&resp.body)
                    .ok_or_else(|| provider_err("response has no message content".into()))?;
                if resp.header("x-ratelimit-remaining-requests") == Some("0") {
                    if let Some(d) = resp
                        .header("x-ratelimit-reset-requests")
                        .and_then(parse_delay)
                    {
                        thread::sleep(d.min(policy.max_delay));
                    }
                }
                return Ok(content);
            }
            Ok(resp) if resp.status == 401 || resp.status == 403 => {
                return Err(GatewayError::AuthError {
                    provider: cfg.provider_id.clone(),
                    message: format!("HTTP {}", resp.status),
                });
            }
            Ok(resp) if is_transient(resp.status) => {
                last_error = format!("HTTP {}", resp.status);
                if let Some(d) = resp.header("retry-after").and_then(parse_delay) {
                    wait = d.min(policy.max_delay);
                }
            }
            Ok(resp) => {
                let snippet: String = resp.body.chars().take(200).collect();
                return Err(provider_err(format!("HTTP {}: {snippet}", resp.status)));
            }
            Err(e) => last_error = e,
        }
        if attempt < policy.max_attempts {
            log::warn!(
                "{}: attempt {attempt} failed ({last_error}), retrying in {wait:?}",
                cfg.provider_id
            );
            thread::sleep(wait);
        }
    }
    Err(provider_err(format!(
        "gave up after {} attempts: {last_error}",
        policy.max_attempts
    )))
}

/// Obtains the raw response text for `prompt` according to `mode`.
pub fn submit_batch(
    cfg: &ProviderConfig,
    prompt: &Prompt,
    cache: &ReplayCache,
    mode: Mode,
    transport: &dyn ChatTransport,
    policy: &RetryPolicy,
) -> Result<String, GatewayError> {
    match mode {
        Mode::Replay => {
            cache
                .get(&cfg.provider_id, prompt)
                .ok_or_else(|| GatewayError::CacheMiss {
                    model_id: cfg.provider_id.clone(),
                    key: prompt.digest(),
                })
        }
        Mode::Record => {
            if let Some(hit) = cache.get(&cfg.provider_id, prompt) {
                return Ok(hit);
            }
            let response = call_provider(cfg, prompt, transport, policy)?;
            Ok(cache.insert(&cfg.provider_id, prompt, &response)?)
        }
        Mode::Live => call_provider(cfg, prompt, transport, policy),
    }
}
