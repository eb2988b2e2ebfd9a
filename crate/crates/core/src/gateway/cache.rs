//! Append-only JSONL response cache, one file per model role.
//!
//! A record is written only for responses that passed typed parsing, so a
//! warm cache replays exactly the accepted responses of the original run.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{GatewayError, Role};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Content hash identifying one model call: role, model name, rendered
/// prompt, and the digests of all attached media, in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn compute(role: Role, model: &str, prompt: &str, media_digests: &[String]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(role.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(model.as_bytes());
        hasher.update([0u8]);
        hasher.update(prompt.as_bytes());
        hasher.update([0u8]);
        for digest in media_digests {
            hasher.update(digest.as_bytes());
            hasher.update([0u8]);
        }
        CacheKey(hex::encode(hasher.finalize()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub role: Role,
    pub model: String,
    pub request_digest: String,
    pub response: Value,
    pub timestamp: u64,
}

/// Thread-safe cache: an in-memory map backed by per-role JSONL files.
/// Writes are serialized; lookups never touch the filesystem after load.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, Value>>,
    files: Mutex<BTreeMap<Role, File>>,
}

impl ResponseCache {
    /// Opens (and loads) the cache under `dir`, or an in-memory cache when
    /// `dir` is `None`.
    pub fn open(dir: Option<&Path>) -> Result<Self, GatewayError> {
        let mut entries = HashMap::new();
        if let Some(dir) = dir {
            fs::create_dir_all(dir).map_err(|e| GatewayError::Cache(e.to_string()))?;
            for role in Role::ALL {
                let path = dir.join(format!("{}.jsonl", role.as_str()));
                if !path.exists() {
                    continue;
                }
                let file = File::open(&path).map_err(|e| GatewayError::Cache(e.to_string()))?;
                for line in BufReader::new(file).lines() {
                    let line = line.map_err(|e| GatewayError::Cache(e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: CacheRecord = serde_json::from_str(&line)
                        .map_err(|e| GatewayError::Cache(format!("{path:?}: {e}")))?;
                    entries.insert(record.key, record.response);
                }
            }
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            entries: RwLock::new(entries),
            files: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Value> {
        self.entries.read().expect("cache lock").get(&key.0).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(
        &self,
        role: Role,
        model: &str,
        key: &CacheKey,
        request_digest: &str,
        response: Value,
    ) -> Result<(), GatewayError> {
        {
            let mut entries = self.entries.write().expect("cache lock");
            if entries.contains_key(&key.0) {
                return Ok(());
            }
            entries.insert(key.0.clone(), response.clone());
        }
        if let Some(dir) = &self.dir {
            let record = CacheRecord {
                key: key.0.clone(),
                role,
                model: model.to_string(),
                request_digest: request_digest.to_string(),
                response,
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0),
            };
            let line =
                serde_json::to_string(&record).map_err(|e| GatewayError::Cache(e.to_string()))?;
            let mut files = self.files.lock().expect("cache writer lock");
            let file = match files.get_mut(&role) {
                Some(f) => f,
                None => {
                    let path = dir.join(format!("{}.jsonl", role.as_str()));
                    let handle = OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(|e| GatewayError::Cache(e.to_string()))?;
                    files.entry(role).or_insert(handle)
                }
            };
            writeln!(file, "{line}").map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_changes_with_any_input_byte() {
        let base = CacheKey::compute(Role::Scorer, "m", "prompt", &["aa".into()]);
        assert_eq!(
            base,
            CacheKey::compute(Role::Scorer, "m", "prompt", &["aa".into()])
        );
        assert_ne!(
            base,
            CacheKey::compute(Role::Scorer, "m", "prompt!", &["aa".into()])
        );
        assert_ne!(
            base,
            CacheKey::compute(Role::Scorer, "m", "prompt", &["ab".into()])
        );
        assert_ne!(
            base,
            CacheKey::compute(Role::Judge, "m", "prompt", &["aa".into()])
        );
        assert_ne!(
            base,
            CacheKey::compute(Role::Scorer, "m2", "prompt", &["aa".into()])
        );
    }

    #[test]
    fn roundtrip_through_jsonl_file() {
        let dir = tempfile::tempdir().unwrap();
        let key = CacheKey::compute(Role::Scorer, "m", "p", &[]);
        {
            let cache = ResponseCache::open(Some(dir.path())).unwrap();
            cache
                .put(Role::Scorer, "m", &key, "digest", json!("anomaly: 1\nsmoke"))
                .unwrap();
        }
        let reloaded = ResponseCache::open(Some(dir.path())).unwrap();
        assert_eq!(reloaded.get(&key), Some(json!("anomaly: 1\nsmoke")));
        // One JSONL object per line in the role file.
        let text = fs::read_to_string(dir.path().join("scorer.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 1);
        let record: CacheRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(record.key, key.0);
        assert_eq!(record.role, Role::Scorer);
    }

    #[test]
    fn duplicate_put_is_ignored() {
        let cache = ResponseCache::open(None).unwrap();
        let key = CacheKey::compute(Role::Judge, "m", "p", &[]);
        cache.put(Role::Judge, "m", &key, "d", json!("a")).unwrap();
        cache.put(Role::Judge, "m", &key, "d", json!("b")).unwrap();
        assert_eq!(cache.get(&key), Some(json!("a")));
    }
}
