use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::JudgeError;

/// One stored verdict. Only parsed, in-range scores are ever written, each
/// next to the reply it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub original: String,
    pub lesioned: String,
    pub score: u8,
    pub reply: String,
}

type Key = (String, String, String);

struct Inner {
    map: HashMap<Key, CacheEntry>,
    file: Option<File>,
}

/// Verdict cache keyed by (original, lesioned, model), optionally persisted
/// as JSON lines. Appends are serialized by the lock.
pub struct JudgeCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl JudgeCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Loads every entry in `path` (created if absent) and appends new
    /// verdicts to it.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let io = |e: std::io::Error| JudgeError::Cache(format!("{}: {e}", path.display()));
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| JudgeError::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
                if !(1..=10).contains(&entry.score) {
                    return Err(JudgeError::Cache(format!(
                        "{}:{}: score {} outside 1..=10",
                        path.display(),
                        n + 1,
                        entry.score
                    )));
                }
                map.insert(key(&entry.original, &entry.lesioned, &entry.model), entry);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner { map, file: Some(file) }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, original: &str, lesioned: &str, model: &str) -> Option<CacheEntry> {
        self.lock().map.get(&key(original, lesioned, model)).cloned()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<(), JudgeError> {
        let mut inner = self.lock();
        let k = key(&entry.original, &entry.lesioned, &entry.model);
        if inner.map.contains_key(&k) {
            return Ok(());
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&entry).map_err(|e| JudgeError::Cache(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| {
                    JudgeError::Cache(format!(
                        "{}: {e}",
                        self.path.as_deref().unwrap_or(Path::new("")).display()
                    ))
                })?;
        }
        inner.map.insert(k, entry);
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

fn key(original: &str, lesioned: &str, model: &str) -> Key {
    (original.to_owned(), lesioned.to_owned(), model.to_owned())
}
