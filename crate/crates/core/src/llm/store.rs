//! Append-only replay store: one JSON record per line after a header line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, LlmError, TaskKind};

pub const REPLAY_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "agentcf-replay";
const SUMMARY_CHARS: usize = 160;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub digest: String,
    pub model: String,
    pub route: TaskKind,
    pub summary: String,
    pub response: String,
}

pub struct ReplayStore {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl ReplayStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Open (or create) a store file; existing records are loaded.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let store_err = |e: std::io::Error| LlmError::Store(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path).map_err(store_err)?.len() > 0;
        if exists {
            let reader = BufReader::new(File::open(path).map_err(store_err)?);
            let mut lines = reader.lines();
            let header_line = lines
                .next()
                .ok_or_else(|| LlmError::Store("missing header".into()))?
                .map_err(store_err)?;
            let header: Header = serde_json::from_str(&header_line)
                .map_err(|e| LlmError::Store(format!("bad header: {e}")))?;
            if header.format != FORMAT_NAME || header.version != REPLAY_FORMAT_VERSION {
                return Err(LlmError::Store(format!(
                    "unsupported store format {} v{}",
                    header.format, header.version
                )));
            }
            for (i, line) in lines.enumerate() {
                let line = line.map_err(store_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ReplayRecord = serde_json::from_str(&line)
                    .map_err(|e| LlmError::Store(format!("record {}: {e}", i + 1)))?;
                entries.insert(rec.digest, rec.response);
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(store_err)?;
        if !exists {
            let header = Header { format: FORMAT_NAME.into(), version: REPLAY_FORMAT_VERSION };
            writeln!(file, "{}", serde_json::to_string(&header).expect("header serializes"))
                .map_err(store_err)?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries.lock().expect("store poisoned").get(&key.0).cloned()
    }

    pub fn put(&self, key: &CacheKey, model: &str, req: &ChatRequest, response: &str) -> Result<(), LlmError> {
        let record = ReplayRecord {
            digest: key.0.clone(),
            model: model.to_string(),
            route: req.route,
            summary: req.last_content().chars().take(SUMMARY_CHARS).collect(),
            response: response.to_string(),
        };
        // writer lock held across insert and append
        let mut writer = self.writer.lock().expect("store poisoned");
        let mut entries = self.entries.lock().expect("store poisoned");
        if entries.contains_key(&key.0) {
            return Ok(());
        }
        if let Some(file) = writer.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(file, "{line}").map_err(|e| LlmError::Store(e.to_string()))?;
            file.flush().map_err(|e| LlmError::Store(e.to_string()))?;
        }
        entries.insert(record.digest, record.response);
        Ok(())
    }
}
