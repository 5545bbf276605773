use std::path::PathBuf;

use vulnscore::gateway::{
    run_predictions, ChatTransport, GatewayError, Mode, OfflineTransport, ReplayCache,
    ReqwestTransport,
};

use super::{display, load_entries, out_file};
use crate::config::AppConfig;
use crate::failure::{ensure, input_error, provider_error, Classify, CmdResult};

/// Cache keys listed in the error message before truncating.
const LISTED_KEYS: usize = 20;

pub fn run(cfg: &AppConfig, dataset: Option<PathBuf>) -> CmdResult {
    if cfg.providers.is_empty() {
        return Err(input_error("no providers configured"));
    }
    let entries = load_entries(cfg, dataset)?;
    if entries.is_empty() {
        return Err(input_error("dataset is empty"));
    }
    let spec = cfg.prompt_spec()?;
    let cache_path = cfg.cache_path();
    let cache = ReplayCache::open(&cache_path)
        .input(format!("cannot open cache {}", display(&cache_path)))?;

    let live;
    let transport: &dyn ChatTransport = match cfg.mode {
        Mode::Replay => &OfflineTransport,
        Mode::Live | Mode::Record => {
            live = ReqwestTransport::new().map_err(provider_error)?;
            &live
        }
    };
    let run = run_predictions(
        &entries,
        &cfg.providers,
        &spec,
        &cache,
        cfg.mode,
        transport,
        &cfg.retry.policy(),
    )
    .input("prediction run")?;

    ensure(
        run.table.len() == entries.len() * cfg.providers.len(),
        || {
            format!(
                "{} rows for {} x {}",
                run.table.len(),
                entries.len(),
                cfg.providers.len()
            )
        },
    )?;
    let out = out_file(cfg, "predictions.csv")?;
    run.table
        .write_csv(&out)
        .input("cannot write predictions")?;
    println!(
        "{} rows ({} prompts per provider, mode {}) -> {}",
        run.table.len(),
        run.prompts_per_provider,
        cfg.mode,
        out.display()
    );

    if run.failures.is_empty() {
        return Ok(());
    }
    let mut missing = Vec::new();
    let mut provider_msgs = Vec::new();
    for f in &run.failures {
        missing.extend(f.missing_keys());
        for e in &f.errors {
            if !matches!(e, GatewayError::CacheMiss { .. }) {
                provider_msgs.push(e.to_string());
            }
        }
    }
    if !provider_msgs.is_empty() {
        return Err(provider_error(provider_msgs.join("; ")));
    }
    let mut msg = format!("{} prompts missing from the replay cache:", missing.len());
    for key in missing.iter().take(LISTED_KEYS) {
        msg.push_str("\n  ");
        msg.push_str(key);
    }
    if missing.len() > LISTED_KEYS {
        msg.push_str(&format!("\n  ... and {} more", missing.len() - LISTED_KEYS));
    }
    Err(input_error(msg))
}
