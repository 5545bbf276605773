use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::Prompt;

/// `model_id:sha256(prompt text)`
pub fn cache_key(model_id: &str, prompt: &Prompt) -> String {
    format!("{model_id}:{}", prompt.digest())
}

/// Append-only store of raw provider responses.
///
/// On disk: one record per line, `model_id<TAB>prompt_sha256<TAB>base64(response)`.
/// The first response stored under a key is the one that is kept.
#[derive(Debug)]
pub struct ReplayCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl ReplayCache {
    pub fn in_memory() -> Self {
        ReplayCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists; new entries are appended to it.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let bad = || {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: malformed cache record", path.display(), i + 1),
                    )
                };
                let mut parts = line.splitn(3, '\t');
                let (model, hash, body) = match (parts.next(), parts.next(), parts.next()) {
                    (Some(m), Some(h), Some(b)) => (m, h, b),
                    _ => return Err(bad()),
                };
                let bytes = STANDARD.decode(body).map_err(|_| bad())?;
                let text = String::from_utf8(bytes).map_err(|_| bad())?;
                entries.entry(format!("{model}:{hash}")).or_insert(text);
            }
        }
        Ok(ReplayCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, prompt: &Prompt) -> Option<String> {
        self.entries
            .lock()
            .unwrap()
            .get(&cache_key(model_id, prompt))
            .cloned()
    }

    /// Stores a response unless the key is already present. Returns the
    /// response now associated with the key.
    pub fn insert(&self, model_id: &str, prompt: &Prompt, response: &str) -> io::Result<String> {
        let key = cache_key(model_id, prompt);
        let mut entries = self.entries.lock().unwrap();
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(path) = &self.path {
            let mut writer = self.writer.lock().unwrap();
            if writer.is_none() {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                *writer = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let file = writer.as_mut().expect("opened above");
            writeln!(
                file,
                "{model_id}\t{}\t{}",
                prompt.digest(),
                STANDARD.encode(response.as_bytes())
            )?;
            file.flush()?;
        }
        entries.insert(key, response.to_owned());
        Ok(response.to_owned())
    }
}
